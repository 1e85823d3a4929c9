//! Depth of a plane from two drops: dewarp, block match, triangulate.
//!
//! cargo run --release --example stereo_depth -- [out_dir]

use std::path::{Path, PathBuf};

use dropstereo::formats::{write_correspondences, write_pfm, write_points};
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::stereo::depth_from_drops;
use dropstereo::{OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("dropstereo-stereo"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).expect("output directory");
    let circle = |cx| DropSpec {
        shape: DropShape::Circle {
            cx,
            cy: 100.0,
            radius: 60.0,
        },
        alpha: 0.3,
    };
    let spec = SceneSpec {
        width: 660,
        height: 200,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Noise {
                seed: 7,
                cell: 120.0,
                octaves: 3,
            },
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }],
        blur_radius: 6.0,
        leak: 0.02,
        border: 0.5,
        drops: vec![circle(130.0), circle(530.0)],
    };
    let mut config = PipelineConfig::new(OpticalConfig::water());
    config.solver.max_iters = 8000;
    let (render, drops) = synthesize(&spec, &config, Path::new("."))?;
    let result = depth_from_drops(&render.image, &drops, &config, None)?;
    println!(
        "{} matches, {} valid points, median depth {:.1} (true 2000), median residual {:.3}",
        result.correspondences.len(),
        result.valid_points().count(),
        result.median_depth().unwrap_or(f64::NAN),
        result.median_residual().unwrap_or(f64::NAN)
    );
    for (k, m) in result.depth_maps.iter().enumerate() {
        write_pfm(out.join(format!("depth_{k}.pfm")), m)?;
    }
    write_points(out.join("points.csv"), &result)?;
    write_correspondences(out.join("matches.csv"), &result.correspondences)?;
    println!("wrote {}", out.display());
    Ok(())
}
