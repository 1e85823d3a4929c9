//! Drop volume from the dark band.
//!
//! Near the band edge the surface transmits only a thin sliver of light, so
//! a ring straddling the predicted edge has a known expected brightness
//! relative to the background. Too small a volume puts the predicted ring
//! inside the true dark band and the ring reads dark; too large a volume
//! pushes it outward into brighter pixels.

use crate::config::{PipelineConfig, VolumeLoopParams, ALPHA_RANGE};
use crate::error::{Error, Result};
use crate::geom::{normal_map, DropMask, HeightField, RasterGray, Vec3};
use crate::optics::{critical_normal_z, CameraModel};
use crate::solver::{init_mesh, initial_volume, solve_from, volume_of, SolveReport};

/// Expected ring brightness over background brightness.
pub const RING_RATIO: f64 = 0.241;

/// Fewest ring pixels a brightness sample may use.
pub const MIN_RING_PIXELS: usize = 8;

/// Pixels of `hf` whose normal lies within `halfwidth` of the critical
/// value, as `(i, j)`.
pub fn band_ring(
    hf: &HeightField,
    config: &PipelineConfig,
    halfwidth: f64,
) -> Result<Vec<(usize, usize)>> {
    let optics = &config.optics;
    optics.validate()?;
    let cam = CameraModel::new(optics, hf.width(), hf.height());
    let normals = normal_map(hf);
    let mut ring = Vec::new();
    for (i, j) in hf.mask().pixels() {
        let p = Vec3::new(j as f64, i as f64, hf.get(i, j));
        let n_crit = critical_normal_z(cam.theta_cprime(p), cam.n_a, cam.n_w)?;
        if (normals[i * hf.width() + j].z - n_crit).abs() <= halfwidth {
            ring.push((i, j));
        }
    }
    Ok(ring)
}

/// Mean raw intensity `I_t` over the ring around the predicted band edge.
pub fn sample_band_brightness(
    image: &RasterGray,
    hf: &HeightField,
    config: &PipelineConfig,
) -> Result<f64> {
    if image.width() != hf.width() || image.height() != hf.height() {
        return Err(Error::domain("image and height field grids differ"));
    }
    let ring = band_ring(hf, config, config.volume.band_halfwidth)?;
    if ring.len() < MIN_RING_PIXELS {
        return Err(Error::RingTooSmall {
            count: ring.len(),
            min: MIN_RING_PIXELS,
        });
    }
    Ok(ring.iter().map(|&(i, j)| image.get(i, j)).sum::<f64>() / ring.len() as f64)
}

/// Mean intensity `I_b` of pixels outside every mask.
pub fn background_brightness(image: &RasterGray, drop_masks: &[DropMask]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (k, &v) in image.data().iter().enumerate() {
        if drop_masks.iter().any(|m| m.bits()[k]) {
            continue;
        }
        sum += v;
        n += 1;
    }
    if n == 0 {
        return Err(Error::domain("no background pixels outside the drops"));
    }
    Ok(sum / n as f64)
}

/// Target ring brightness `I_r = 0.241·I_b`.
pub fn target_brightness(image: &RasterGray, drop_masks: &[DropMask]) -> Result<f64> {
    for m in drop_masks {
        if m.width() != image.width() || m.height() != image.height() {
            return Err(Error::domain("mask and image grids differ"));
        }
    }
    Ok(RING_RATIO * background_brightness(image, drop_masks)?)
}

/// `V_{t+1} = V_t + τ_r·V_t·(1 − I_t/I_r)`.
pub fn volume_update(v_t: f64, i_t: f64, i_r: f64, tau_r: f64) -> Result<f64> {
    if !(i_r > 0.0) {
        return Err(Error::domain(format!(
            "target brightness must be positive, got {i_r}"
        )));
    }
    if !(v_t > 0.0) {
        return Err(Error::domain(format!("volume must be positive, got {v_t}")));
    }
    Ok(v_t + tau_r * v_t * (1.0 - i_t / i_r))
}

/// Clamps a volume to the admissible α range for a mask of area `area`.
pub fn clamp_volume(v: f64, area: usize) -> f64 {
    let scale = (area as f64).powf(1.5);
    v.clamp(ALPHA_RANGE.0 * scale, ALPHA_RANGE.1 * scale)
}

#[derive(Clone, Debug)]
pub struct ShapeEstimate {
    pub height_field: HeightField,
    pub alpha: f64,
    pub report: SolveReport,
    /// α before each volume update, then the final value.
    pub alpha_history: Vec<f64>,
    /// Ring brightness `I_t` measured at each update.
    pub brightness_history: Vec<f64>,
    pub target_brightness: f64,
}

/// Alternates partial fixed-volume solves with volume updates, then solves
/// to convergence at the final volume. The target brightness comes from the
/// pixels outside `mask`.
pub fn estimate_shape(
    image: &RasterGray,
    mask: &DropMask,
    config: &PipelineConfig,
) -> Result<ShapeEstimate> {
    let i_r = config.volume.ring_ratio * background_brightness(image, std::slice::from_ref(mask))?;
    estimate_shape_with_target(image, mask, i_r, config)
}

/// As [`estimate_shape`] with a given target brightness `I_r`, e.g. one
/// computed with every drop in the image masked out.
pub fn estimate_shape_with_target(
    image: &RasterGray,
    mask: &DropMask,
    i_r: f64,
    config: &PipelineConfig,
) -> Result<ShapeEstimate> {
    config.validate()?;
    let VolumeLoopParams {
        tau_r,
        inner_iters_per_update,
        max_outer_updates,
        alpha_init,
        rel_volume_tol,
        mirror_alpha,
        ..
    } = config.volume;
    let area = mask.area();
    let solve = |hf: HeightField, v: f64, sweeps: usize| {
        solve_from(hf, v, &config.solver, &config.optics, sweeps)
    };
    if let Some(alpha) = mirror_alpha {
        let v = initial_volume(mask, alpha)?;
        let (hf, report) = solve(init_mesh(mask, alpha)?, v, config.solver.max_iters)?;
        return Ok(ShapeEstimate {
            height_field: hf,
            alpha,
            report,
            alpha_history: vec![alpha],
            brightness_history: vec![],
            target_brightness: f64::NAN,
        });
    }
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::domain("image and mask grids differ"));
    }
    let scale = (area as f64).powf(1.5);
    let mut v = initial_volume(mask, alpha_init)?;
    let (mut hf, _) = solve(init_mesh(mask, alpha_init)?, v, inner_iters_per_update)?;
    let mut alphas = vec![alpha_init];
    let mut brightness = vec![];
    for _ in 0..max_outer_updates {
        let i_t = sample_band_brightness(image, &hf, config)?;
        brightness.push(i_t);
        let next = clamp_volume(volume_update(v, i_t, i_r, tau_r)?, area);
        let rel = (next - v).abs() / v;
        v = next;
        alphas.push(v / scale);
        log::debug!(
            "volume update: I_t = {i_t:.4}, I_r = {i_r:.4}, alpha -> {:.4}",
            v / scale
        );
        if rel < rel_volume_tol {
            break;
        }
        hf = solve(hf, v, inner_iters_per_update)?.0;
    }
    let (hf, report) = solve(hf, v, config.solver.max_iters)?;
    debug_assert!((volume_of(&hf) - v).abs() <= 1e-9 * v);
    Ok(ShapeEstimate {
        height_field: hf,
        alpha: v / scale,
        report,
        alpha_history: alphas,
        brightness_history: brightness,
        target_brightness: i_r,
    })
}
