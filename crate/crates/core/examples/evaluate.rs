//! Error statistics of a reconstructed drop against its ground truth.
//!
//! cargo run --release --example evaluate

use dropstereo::eval::{evaluate, height_rms_fraction, Normalization};
use dropstereo::formats::FloatMap;
use dropstereo::solver::{initial_volume, solve_fixed_volume};
use dropstereo::{DropMask, HeightField, OpticalConfig, SolverParams};

fn as_map(hf: &HeightField) -> dropstereo::Result<FloatMap> {
    let data: Vec<f64> = hf
        .heights()
        .iter()
        .zip(hf.mask().bits())
        .map(|(&z, &m)| if m { z } else { f64::NAN })
        .collect();
    FloatMap::from_f64(hf.width(), hf.height(), &data)
}

fn main() -> dropstereo::Result<()> {
    let mask = DropMask::disk(101, 101, 50.0, 50.0, 40.0)?;
    let optics = OpticalConfig::water();
    let params = SolverParams::default();
    let truth = solve_fixed_volume(&mask, initial_volume(&mask, 0.30)?, &params, &optics)?.0;
    for alpha in [0.30, 0.27, 0.20] {
        let pred = solve_fixed_volume(&mask, initial_volume(&mask, alpha)?, &params, &optics)?.0;
        let report = evaluate(
            &as_map(&pred)?,
            &as_map(&truth)?,
            Normalization::DropDiameter,
        )?;
        println!(
            "alpha {alpha:.2} vs 0.30: rms {:.3} px = {:.2}% of diameter {:.1} (height_rms_fraction {:.2}%)",
            report.rms,
            100.0 * report.rms_rel,
            report.scale,
            100.0 * height_rms_fraction(&pred, &truth)?
        );
    }
    Ok(())
}
