//! Least-squares intersection of rays, and what happens as they become
//! parallel.
//!
//! cargo run --example triangulate

use dropstereo::raytrace::Ray;
use dropstereo::stereo::triangulate;
use dropstereo::{Error, Vec3};

fn main() -> dropstereo::Result<()> {
    let target = Vec3::new(40.0, -25.0, 2000.0);
    let rays = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(400.0, 0.0, 0.0),
        Vec3::new(200.0, 150.0, 0.0),
    ]
    .map(|o| Ray::new(o, target - o).unwrap());
    let (p, res) = triangulate(&rays)?;
    println!("three rays through {target:?}: {p:?}, residual {res:.2e}");

    // two skew rays: the midpoint of their common perpendicular
    let a = Ray::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0))?;
    let b = Ray::new(Vec3::new(0.0, 1.0, 1.0), Vec3::new(0.0, 1.0, 0.0))?;
    let (p, res) = triangulate(&[a, b])?;
    println!("skew rays: {p:?}, residual {res}");

    for spread in [1.0, 1e-2, 1e-4, 1e-6] {
        let o2 = Vec3::new(spread, 0.0, 0.0);
        let r = [Ray::new(Vec3::zeros(), target)?, Ray::new(o2, target - o2)?];
        match triangulate(&r) {
            Ok((p, _)) => println!("baseline {spread:e}: z = {:.6}", p.z),
            Err(Error::DegenerateGeometry { cond }) => {
                println!("baseline {spread:e}: degenerate (condition {cond:.2e})")
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
