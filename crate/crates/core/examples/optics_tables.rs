//! Fresnel transmittance and the total-reflection threshold.
//!
//! cargo run --example optics_tables

use dropstereo::optics::{critical_normal_z, fresnel_transmittance, transmittance_from_water};

fn main() -> dropstereo::Result<()> {
    let (na, nw): (f64, f64) = (1.0, 4.0 / 3.0);
    println!("theta_a  T_s     T_p     T");
    for deg in [
        0.0,
        20.0,
        40.0,
        (nw / na).atan().to_degrees(),
        70.0,
        85.0,
        89.0,
    ] {
        let f = fresnel_transmittance(deg.to_radians(), na, nw)?;
        println!("{deg:6.2}   {:.4}  {:.4}  {:.4}", f.t_s, f.t_p, f.t);
    }
    let critical = (na / nw).asin().to_degrees();
    println!("critical angle inside water: {critical:.2} deg");
    for deg in [critical - 5.0, critical - 0.5, critical + 0.5] {
        println!(
            "  from water at {deg:.2} deg: T = {:.4}",
            transmittance_from_water(deg.to_radians(), na, nw)
        );
    }
    for deg in [0.0f64, 5.0, 10.0, 20.0] {
        println!(
            "camera ray at {deg:4.1} deg: surface totally reflects where N_z <= {:.4}",
            critical_normal_z(deg.to_radians(), na, nw)?
        );
    }
    Ok(())
}
