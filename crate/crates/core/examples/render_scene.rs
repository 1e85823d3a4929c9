//! Renders a textured plane seen through two drops and writes the image
//! with its ground truth.
//!
//! cargo run --release --example render_scene -- [out_dir]

use std::path::{Path, PathBuf};

use dropstereo::formats::{write_height_field, write_json, write_pfm, write_ppm, FloatMap};
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::{OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("dropstereo-render"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).expect("output directory");
    let spec = SceneSpec {
        width: 440,
        height: 150,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Checker {
                square: 150.0,
                softness: 0.1,
            },
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }],
        blur_radius: 4.0,
        leak: 0.02,
        border: 0.5,
        drops: vec![
            DropSpec {
                shape: DropShape::Circle {
                    cx: 100.0,
                    cy: 75.0,
                    radius: 55.0,
                },
                alpha: 0.3,
            },
            DropSpec {
                shape: DropShape::Irregular {
                    cx: 330.0,
                    cy: 75.0,
                    radius: 55.0,
                    seed: 4,
                    roughness: 0.15,
                },
                alpha: 0.25,
            },
        ],
    };
    let config = PipelineConfig::new(OpticalConfig::water());
    let (render, drops) = synthesize(&spec, &config, Path::new("."))?;
    write_ppm(out.join("image.ppm"), &render.image)?;
    write_pfm(
        out.join("depth.pfm"),
        &FloatMap::from_f64(spec.width, spec.height, &render.depth)?,
    )?;
    for (k, hf) in drops.iter().enumerate() {
        write_height_field(out.join(format!("drop_{k}.pfm")), hf)?;
    }
    write_json(out.join("scene.json"), &spec)?;
    let band: usize = drops
        .iter()
        .map(|d| {
            d.mask()
                .pixels()
                .filter(|&(i, j)| render.transmittance[i * spec.width + j] == 0.0)
                .count()
        })
        .sum();
    println!(
        "wrote {} ({} drop pixels totally reflected)",
        out.display(),
        band
    );
    Ok(())
}
