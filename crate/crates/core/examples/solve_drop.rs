//! Fixed-volume surface of a circular drop on a level plate and on a
//! tilted one. Gravity normal to the plate leaves the shape alone; only its
//! in-plane part moves water.
//!
//! cargo run --release --example solve_drop

use dropstereo::solver::{initial_volume, solve_fixed_volume, volume_of};
use dropstereo::{DropMask, OpticalConfig, SolverParams};

fn main() -> dropstereo::Result<()> {
    let mask = DropMask::disk(121, 121, 60.0, 60.0, 50.0)?;
    let params = SolverParams::default();
    let tilt = 30f64.to_radians();
    for (label, cosines, weight) in [
        ("level plate", [0.0, 0.0, 1.0], 1e-4),
        ("plate tilted 30 deg", [tilt.sin(), 0.0, tilt.cos()], 2e-3),
    ] {
        let mut optics = OpticalConfig::water();
        optics.gravity_cosines = cosines;
        optics.gravity_weight = weight;
        let v = initial_volume(&mask, 0.3)?;
        let (hf, report) = solve_fixed_volume(&mask, v, &params, &optics)?;
        println!(
            "{label}: {} sweeps (converged: {}), E = {:.1} (tension {:.1}, gravity {:.1})",
            report.iterations_run,
            report.converged,
            report.final_energy.total,
            report.final_energy.tension,
            report.final_energy.gravity
        );
        println!(
            "  max height {:.2} px, volume {:.1} (target {:.1})",
            hf.max_height(),
            volume_of(&hf),
            v
        );
        let row: Vec<String> = (10..=110)
            .step_by(10)
            .map(|j| format!("{:.1}", hf.get(60, j)))
            .collect();
        println!("  centre row, uphill to downhill: {}", row.join(" "));
    }
    Ok(())
}
