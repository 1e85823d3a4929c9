//! Finds drop masks in a rendered image and scores them against the truth.
//!
//! cargo run --release --example detect_drops

use std::path::Path;

use dropstereo::detect::detect_drops;
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::{OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let spec = SceneSpec {
        width: 420,
        height: 200,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Noise {
                seed: 2,
                cell: 150.0,
                octaves: 3,
            },
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }],
        blur_radius: 6.0,
        leak: 0.02,
        border: 0.5,
        drops: vec![
            DropSpec {
                shape: DropShape::Circle {
                    cx: 110.0,
                    cy: 100.0,
                    radius: 70.0,
                },
                alpha: 0.3,
            },
            DropSpec {
                shape: DropShape::Ellipse {
                    cx: 300.0,
                    cy: 100.0,
                    rx: 60.0,
                    ry: 45.0,
                    angle_deg: 20.0,
                },
                alpha: 0.25,
            },
        ],
    };
    let mut config = PipelineConfig::new(OpticalConfig::water());
    let (render, truth) = synthesize(&spec, &config, Path::new("."))?;
    // the default size filter expects drops at least 300 px across
    config.detect.min_diameter = 60.0;
    let masks = detect_drops(&render.image, &config.detect)?;
    println!("{} drops found", masks.len());
    for (k, m) in masks.iter().enumerate() {
        let best = truth
            .iter()
            .map(|t| t.mask().intersection_over_union(m))
            .fold(0.0, f64::max);
        println!(
            "  drop {k}: {} px, diameter {:.1}, bbox {:?}, best IoU with truth {best:.3}",
            m.area(),
            m.equivalent_diameter(),
            m.bbox().unwrap()
        );
    }
    Ok(())
}
