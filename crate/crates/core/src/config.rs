//! Configuration documents. Every struct rejects unknown keys, and every
//! optional key has a documented default visible in the generated schema.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and camera parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    /// Refractive index of air.
    #[serde(default = "defaults::n_air")]
    pub n_air: f64,
    /// Refractive index of water (required, typically 1.333).
    pub n_water: f64,
    /// Perpendicular camera distance to the plate, in pixels.
    #[serde(default = "defaults::camera_z")]
    pub camera_z: f64,
    /// Foot of the camera axis on the plate as `[x, y]` = (column, row).
    /// `null` uses the image center.
    #[serde(default)]
    pub principal_point: Option<[f64; 2]>,
    /// Direction cosines of gravity relative to the `x`, `y`, `z` axes.
    #[serde(default = "defaults::gravity_cosines")]
    pub gravity_cosines: [f64; 3],
    /// Dimensionless tension weight σ̂.
    #[serde(default = "defaults::tension_weight")]
    pub tension_weight: f64,
    /// Dimensionless gravity weight ĝ.
    #[serde(default = "defaults::gravity_weight")]
    pub gravity_weight: f64,
    /// Meters per pixel. Metadata only.
    #[serde(default = "defaults::pixel_pitch")]
    pub pixel_pitch: f64,
    /// Use `C′ = (n_w/n_a)·C_z` instead of the exact equivalent camera.
    #[serde(default)]
    pub paraxial: bool,
    /// Treat every incidence ray as parallel to the optical axis (θ_C′ = 0).
    #[serde(default)]
    pub camera_at_infinity: bool,
}

impl OpticalConfig {
    pub fn water() -> Self {
        Self {
            n_air: defaults::n_air(),
            n_water: 4.0 / 3.0,
            camera_z: defaults::camera_z(),
            principal_point: None,
            gravity_cosines: defaults::gravity_cosines(),
            tension_weight: defaults::tension_weight(),
            gravity_weight: defaults::gravity_weight(),
            pixel_pitch: defaults::pixel_pitch(),
            paraxial: false,
            camera_at_infinity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_air > 0.0 && self.n_water > self.n_air) {
            return Err(Error::Config(format!(
                "need n_water > n_air > 0 (n_air = {}, n_water = {})",
                self.n_air, self.n_water
            )));
        }
        if !(self.camera_z > 0.0) {
            return Err(Error::Config("camera_z must be positive".into()));
        }
        let g = self.gravity_cosines;
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "gravity_cosines must have unit norm, got {norm}"
            )));
        }
        if !(self.tension_weight > 0.0) || !(self.gravity_weight >= 0.0) {
            return Err(Error::Config("solver weights must be positive".into()));
        }
        Ok(())
    }

    /// Principal point for a grid of the given size.
    pub fn principal_point_for(&self, width: usize, height: usize) -> [f64; 2] {
        self.principal_point
            .unwrap_or([(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Contact line held at `z = 0`.
    #[default]
    Pinned,
    /// Every mask pixel moves (test mode).
    Free,
}

/// Fixed-volume solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    /// Stop when `Σ|Δz| < convergence_rel · V`.
    #[serde(default = "defaults::convergence_rel")]
    pub convergence_rel: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tau: defaults::tau(),
            max_iters: defaults::max_iters(),
            convergence_rel: defaults::convergence_rel(),
            boundary: Boundary::Pinned,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || self.max_iters == 0 || !(self.convergence_rel > 0.0) {
            return Err(Error::Config(
                "solver needs tau > 0, max_iters >= 1, convergence_rel > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Lowest and highest admissible volume coefficient α.
pub const ALPHA_RANGE: (f64, f64) = (0.05, 0.60);

/// Dark-band volume loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VolumeLoopParams {
    #[serde(default = "defaults::tau_r")]
    pub tau_r: f64,
    #[serde(default = "defaults::inner_iters")]
    pub inner_iters_per_update: usize,
    #[serde(default = "defaults::max_outer")]
    pub max_outer_updates: usize,
    #[serde(default = "defaults::alpha_init")]
    pub alpha_init: f64,
    #[serde(default = "defaults::rel_volume_tol")]
    pub rel_volume_tol: f64,
    /// Half-width ε of the sampled ring in normal-z units.
    #[serde(default = "defaults::band_halfwidth")]
    pub band_halfwidth: f64,
    /// Ratio `I_r / I_b` of target ring brightness to background brightness.
    #[serde(default = "defaults::ring_ratio")]
    pub ring_ratio: f64,
    /// Fixed α for reflective drops that show no dark band (mirror mode).
    /// When set, the brightness loop is skipped.
    #[serde(default)]
    pub mirror_alpha: Option<f64>,
}

impl Default for VolumeLoopParams {
    fn default() -> Self {
        Self {
            tau_r: defaults::tau_r(),
            inner_iters_per_update: defaults::inner_iters(),
            max_outer_updates: defaults::max_outer(),
            alpha_init: defaults::alpha_init(),
            rel_volume_tol: defaults::rel_volume_tol(),
            band_halfwidth: defaults::band_halfwidth(),
            ring_ratio: defaults::ring_ratio(),
            mirror_alpha: None,
        }
    }
}

impl VolumeLoopParams {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha_init)?;
        if let Some(a) = self.mirror_alpha {
            validate_alpha(a)?;
        }
        if !(self.tau_r > 0.0)
            || self.inner_iters_per_update == 0
            || self.max_outer_updates == 0
            || !(self.rel_volume_tol > 0.0)
            || !(self.band_halfwidth > 0.0)
            || !(self.ring_ratio > 0.0)
        {
            return Err(Error::Config(
                "volume loop parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    let (lo, hi) = ALPHA_RANGE;
    if !(lo..=hi).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha = {alpha} is outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Drop detection settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DetectParams {
    /// Percentile of gradient magnitude for the weak hysteresis threshold.
    #[serde(default = "defaults::low_percentile")]
    pub low_percentile: f64,
    /// Percentile of gradient magnitude for the strong hysteresis threshold.
    #[serde(default = "defaults::high_percentile")]
    pub high_percentile: f64,
    /// Lower bound on the weak threshold as a fraction of the maximum magnitude.
    #[serde(default = "defaults::low_floor")]
    pub low_floor: f64,
    /// Lower bound on the strong threshold as a fraction of the maximum magnitude.
    #[serde(default = "defaults::high_floor")]
    pub high_floor: f64,
    #[serde(default = "defaults::closing_radius")]
    pub closing_radius: usize,
    #[serde(default = "defaults::min_solidity")]
    pub min_solidity: f64,
    /// Minimum equivalent diameter in pixels.
    #[serde(default = "defaults::min_diameter")]
    pub min_diameter: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            low_percentile: defaults::low_percentile(),
            high_percentile: defaults::high_percentile(),
            low_floor: defaults::low_floor(),
            high_floor: defaults::high_floor(),
            closing_radius: defaults::closing_radius(),
            min_solidity: defaults::min_solidity(),
            min_diameter: defaults::min_diameter(),
        }
    }
}

/// ZNCC block matcher settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BlockMatchParams {
    /// Odd window side length.
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default = "defaults::search_radius")]
    pub search_radius: usize,
    #[serde(default = "defaults::min_score")]
    pub min_score: f64,
    /// Maximum left-right disagreement in pixels.
    #[serde(default = "defaults::lr_tolerance")]
    pub lr_tolerance: f64,
    /// Grid spacing of matched pixels on the first image.
    #[serde(default = "defaults::stride")]
    pub stride: usize,
    /// Minimum window standard deviation; flatter windows are skipped.
    #[serde(default = "defaults::min_texture")]
    pub min_texture: f64,
    #[serde(default = "defaults::min_matches")]
    pub min_matches: usize,
    /// Coarse-to-fine levels. `search_radius` applies at the coarsest
    /// level, so the reach at full resolution is `search_radius · 2^(levels − 1)`.
    #[serde(default = "defaults::pyramid_levels")]
    pub pyramid_levels: usize,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        Self {
            window: defaults::window(),
            search_radius: defaults::search_radius(),
            min_score: defaults::min_score(),
            lr_tolerance: defaults::lr_tolerance(),
            stride: defaults::stride(),
            min_texture: defaults::min_texture(),
            min_matches: defaults::min_matches(),
            pyramid_levels: defaults::pyramid_levels(),
        }
    }
}

/// Stereo stage settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StereoParams {
    /// Side of the square angular-dewarped image per drop.
    #[serde(default = "defaults::dewarp_resolution")]
    pub dewarp_resolution: usize,
    #[serde(default)]
    pub block_match: BlockMatchParams,
    /// Points with residual above this multiple of the median are invalid.
    #[serde(default = "defaults::outlier_factor")]
    pub outlier_factor: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        Self {
            dewarp_resolution: defaults::dewarp_resolution(),
            block_match: BlockMatchParams::default(),
            outlier_factor: defaults::outlier_factor(),
        }
    }
}

/// Everything a pipeline run reads from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub optics: OpticalConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub volume: VolumeLoopParams,
    #[serde(default)]
    pub detect: DetectParams,
    #[serde(default)]
    pub stereo: StereoParams,
}

impl PipelineConfig {
    pub fn new(optics: OpticalConfig) -> Self {
        Self {
            optics,
            solver: SolverParams::default(),
            volume: VolumeLoopParams::default(),
            detect: DetectParams::default(),
            stereo: StereoParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.solver.validate()?;
        self.volume.validate()?;
        Ok(())
    }
}

pub(crate) mod defaults {
    pub fn n_air() -> f64 {
        1.0
    }
    pub fn camera_z() -> f64 {
        3000.0
    }
    pub fn gravity_cosines() -> [f64; 3] {
        [0.0, 0.0, 1.0]
    }
    pub fn tension_weight() -> f64 {
        1.0
    }
    pub fn gravity_weight() -> f64 {
        1e-4
    }
    pub fn pixel_pitch() -> f64 {
        6e-6
    }
    pub fn tau() -> f64 {
        0.5
    }
    pub fn max_iters() -> usize {
        4000
    }
    pub fn convergence_rel() -> f64 {
        1e-6
    }
    pub fn tau_r() -> f64 {
        0.5
    }
    pub fn inner_iters() -> usize {
        400
    }
    pub fn max_outer() -> usize {
        10
    }
    pub fn alpha_init() -> f64 {
        0.30
    }
    pub fn rel_volume_tol() -> f64 {
        1e-3
    }
    pub fn band_halfwidth() -> f64 {
        0.02 * std::f64::consts::PI
    }
    pub fn ring_ratio() -> f64 {
        0.241
    }
    pub fn low_percentile() -> f64 {
        70.0
    }
    pub fn high_percentile() -> f64 {
        90.0
    }
    pub fn low_floor() -> f64 {
        0.05
    }
    pub fn high_floor() -> f64 {
        0.15
    }
    pub fn closing_radius() -> usize {
        5
    }
    pub fn min_solidity() -> f64 {
        0.85
    }
    pub fn min_diameter() -> f64 {
        300.0
    }
    pub fn window() -> usize {
        11
    }
    pub fn search_radius() -> usize {
        24
    }
    pub fn min_score() -> f64 {
        0.7
    }
    pub fn lr_tolerance() -> f64 {
        1.0
    }
    pub fn stride() -> usize {
        4
    }
    pub fn min_texture() -> f64 {
        1e-3
    }
    pub fn min_matches() -> usize {
        8
    }
    pub fn pyramid_levels() -> usize {
        2
    }
    pub fn dewarp_resolution() -> usize {
        256
    }
    pub fn outlier_factor() -> f64 {
        3.0
    }
}
