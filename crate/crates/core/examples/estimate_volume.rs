//! Recovers a drop's volume from its dark band, starting away from the
//! true value. Pass a ring ratio and inner sweep count to try other loop
//! settings.
//!
//! cargo run --release --example estimate_volume -- [ring_ratio] [inner_sweeps]

use std::path::Path;

use dropstereo::eval::height_rms_fraction;
use dropstereo::scene::{synthesize, DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::volume::estimate_shape;
use dropstereo::{OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = PipelineConfig::new(OpticalConfig::water());
    if let Some(r) = args.next() {
        config.volume.ring_ratio = r.parse().expect("ring ratio");
    }
    if let Some(n) = args.next() {
        config.volume.inner_iters_per_update = n.parse().expect("sweep count");
    }
    let spec = SceneSpec {
        width: 160,
        height: 160,
        planes: vec![PlaneSpec {
            depth: 2000.0,
            texture: Texture::Noise {
                seed: 12,
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
        drops: vec![DropSpec {
            shape: DropShape::Irregular {
                cx: 80.0,
                cy: 80.0,
                radius: 55.0,
                seed: 12,
                roughness: 0.15,
            },
            alpha: 0.30,
        }],
    };
    let (render, truth) = synthesize(&spec, &config, Path::new("."))?;
    config.volume.alpha_init = 0.20;
    let est = estimate_shape(&render.image, truth[0].mask(), &config)?;
    println!("target ring brightness {:.4}", est.target_brightness);
    for (k, a) in est.alpha_history.iter().enumerate() {
        match est.brightness_history.get(k) {
            Some(b) => println!("  alpha {a:.4}  ring {b:.4}"),
            None => println!("  alpha {a:.4}"),
        }
    }
    println!(
        "true alpha 0.30, estimated {:.3}; height rms {:.2}% of diameter",
        est.alpha,
        100.0 * height_rms_fraction(&est.height_field, &truth[0])?
    );
    Ok(())
}
