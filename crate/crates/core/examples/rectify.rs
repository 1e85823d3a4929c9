//! Perspective-correct view through a drop, at the true plane depth and
//! at a wrong one.
//!
//! cargo run --release --example rectify -- [out_dir]

use std::path::{Path, PathBuf};

use dropstereo::formats::{write_json, write_pgm};
use dropstereo::rectify::{compensate_illuminance, rectify_drop, DepthSource};
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::{OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("dropstereo-rectify"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).expect("output directory");
    let spec = SceneSpec {
        width: 160,
        height: 160,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Checker {
                square: 500.0,
                softness: 0.0,
            },
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }],
        blur_radius: 0.0,
        leak: 0.02,
        border: 0.5,
        drops: vec![DropSpec {
            shape: DropShape::Circle {
                cx: 80.0,
                cy: 80.0,
                radius: 60.0,
            },
            alpha: 0.3,
        }],
    };
    let config = PipelineConfig::new(OpticalConfig::water());
    let (render, drops) = synthesize(&spec, &config, Path::new("."))?;
    let hf = &drops[0];
    let comp = compensate_illuminance(&render.image, hf, &config.optics)?;
    write_pgm(out.join("warped.pgm"), &render.image)?;
    write_pgm(out.join("compensated.pgm"), &comp.image)?;
    for depth in [2000.0, 1000.0] {
        let view = rectify_drop(&render.image, hf, &config.optics, DepthSource::Plane(depth))?;
        println!(
            "depth {depth}: {}x{} at {:.4} px per plate px, {:.0}% valid",
            view.info.width,
            view.info.height,
            view.info.scale,
            100.0 * view.info.valid_fraction
        );
        write_pgm(out.join(format!("rectified_{depth}.pgm")), &view.image)?;
        write_json(out.join(format!("rectified_{depth}.json")), &view.info)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
