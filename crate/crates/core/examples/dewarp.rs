//! Undistorts the view through one drop onto a regular angular grid.
//!
//! cargo run --release --example dewarp -- [out_dir]

use std::path::{Path, PathBuf};

use dropstereo::formats::write_pgm;
use dropstereo::raytrace::dewarp_image;
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::{OpticalConfig, PipelineConfig, RasterGray};

fn main() -> dropstereo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("dropstereo-dewarp"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).expect("output directory");
    let spec = SceneSpec {
        width: 160,
        height: 160,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Lines {
                spacing: 300.0,
                width: 40.0,
            },
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }],
        blur_radius: 3.0,
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
    let view = dewarp_image(&render.image, &drops[0], &config.optics, 200)?;
    let grid = view.grid;
    println!(
        "angular grid centred at ({:.3}, {:.3}), {:.5} per pixel, {} of {} pixels valid",
        grid.center[0],
        grid.center[1],
        grid.step,
        view.valid_count(),
        grid.size * grid.size
    );
    // invalid pixels shown mid-gray
    let shown = RasterGray::from_fn(grid.size, grid.size, |r, c| {
        if view.is_valid(r, c) {
            view.image.get(r, c)
        } else {
            0.5
        }
    });
    write_pgm(out.join("warped.pgm"), &render.image)?;
    write_pgm(out.join("dewarped.pgm"), &shown)?;
    println!("wrote {}", out.display());
    Ok(())
}
