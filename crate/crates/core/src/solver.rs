//! Fixed-volume minimum-energy surface.
//!
//! Each sweep runs a tension update (mean-curvature flow), a gravity update
//! (planar tilt toward the weighted centroid), and a volume update (uniform
//! shift back onto the target volume), in that order.

use crate::config::{Boundary, OpticalConfig, SolverParams};
use crate::error::{Error, Result};
use crate::geom::{gradient, mask_centroid, DropMask, HeightField};

/// Largest explicit tension step the compact stencil tolerates.
const MAX_TENSION_SUBSTEP: f64 = 0.25;
/// Beyond this many substeps per sweep the step size is treated as
/// user error and left to diverge.
const MAX_SUBSTEPS: usize = 64;

/// Sweeps between energy samples in [`SolveReport::energy_trace`].
pub const ENERGY_SAMPLE_INTERVAL: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    pub tension: f64,
    pub gravity: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations_run: usize,
    pub final_energy: Energy,
    /// `Σ|z_{t+1} − z_t|` of the last sweep.
    pub last_change: f64,
    /// `(sweep, E)` every [`ENERGY_SAMPLE_INTERVAL`] sweeps, plus sweep 0.
    pub energy_trace: Vec<(usize, f64)>,
    /// Volume error `|Σz − V| / V` after each sweep, worst case.
    pub max_volume_error: f64,
    pub converged: bool,
}

pub fn initial_volume(mask: &DropMask, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if mask.area() == 0 {
        return Err(Error::domain("empty mask"));
    }
    Ok(alpha * (mask.area() as f64).powf(1.5))
}

/// Cylinder of height `α·√B` over the whole mask.
pub fn init_mesh(mask: &DropMask, alpha: f64) -> Result<HeightField> {
    initial_volume(mask, alpha)?;
    let h = alpha * (mask.area() as f64).sqrt();
    HeightField::constant(mask.clone(), h)
}

pub fn volume_of(hf: &HeightField) -> f64 {
    hf.heights().iter().sum()
}

/// `E_T = σ̂·Σ√(1 + |∇z|²)`, `E_G = ĝ·Σ[z·(x cosθ_x + y cosθ_y) + z²/2·cosθ_z]`.
pub fn energy_of(hf: &HeightField, config: &OpticalConfig) -> Energy {
    let g = gradient(hf);
    let [cx, cy, cz] = config.gravity_cosines;
    let w = hf.width();
    let (mut et, mut eg) = (0.0, 0.0);
    for (i, j) in hf.mask().pixels() {
        let k = i * w + j;
        et += (1.0 + g.x[k] * g.x[k] + g.y[k] * g.y[k]).sqrt();
        let z = hf.heights()[k];
        eg += z * (j as f64 * cx + i as f64 * cy) + 0.5 * z * z * cz;
    }
    let tension = config.tension_weight * et;
    let gravity = config.gravity_weight * eg;
    Energy {
        tension,
        gravity,
        total: tension + gravity,
    }
}

/// Precomputed neighborhood of a mask for in-place sweeps.
struct Stencil {
    width: usize,
    /// Mask pixels, row-major linear indices.
    members: Vec<usize>,
    /// Pixels the updates may move.
    free: Vec<usize>,
    /// Neighbor flags per linear index: left, right, up, down.
    nbr: Vec<[bool; 4]>,
}

impl Stencil {
    fn new(mask: &DropMask, boundary: Boundary) -> Self {
        let w = mask.width();
        let mut nbr = vec![[false; 4]; w * mask.height()];
        let mut members = Vec::with_capacity(mask.area());
        let mut free = Vec::with_capacity(mask.area());
        for (i, j) in mask.pixels() {
            let k = i * w + j;
            let (ii, jj) = (i as isize, j as isize);
            nbr[k] = [
                mask.contains_signed(ii, jj - 1),
                mask.contains_signed(ii, jj + 1),
                mask.contains_signed(ii - 1, jj),
                mask.contains_signed(ii + 1, jj),
            ];
            members.push(k);
            if boundary == Boundary::Free || nbr[k].iter().all(|&b| b) {
                free.push(k);
            }
        }
        Self {
            width: w,
            members,
            free,
            nbr,
        }
    }

    /// Central/one-sided gradient at `k`.
    #[inline]
    fn grad(&self, z: &[f64], k: usize) -> (f64, f64) {
        let w = self.width;
        let [l, r, u, d] = self.nbr[k];
        let gx = match (l, r) {
            (true, true) => 0.5 * (z[k + 1] - z[k - 1]),
            (false, true) => z[k + 1] - z[k],
            (true, false) => z[k] - z[k - 1],
            _ => 0.0,
        };
        let gy = match (u, d) {
            (true, true) => 0.5 * (z[k + w] - z[k - w]),
            (false, true) => z[k + w] - z[k],
            (true, false) => z[k] - z[k - w],
            _ => 0.0,
        };
        (gx, gy)
    }

    /// `div(∇z / √(1 + |∇z|²))` with fluxes on pixel edges. Missing edges at
    /// the mask boundary replicate the opposite edge's flux.
    fn curvature(&self, z: &[f64], out: &mut [f64], gx: &mut [f64], gy: &mut [f64]) {
        let w = self.width;
        for &k in &self.members {
            let (a, b) = self.grad(z, k);
            gx[k] = a;
            gy[k] = b;
        }
        for &k in &self.free {
            let [l, r, u, d] = self.nbr[k];
            let flux_x = |a: usize, b: usize| {
                let dx = z[b] - z[a];
                let ty = 0.5 * (gy[a] + gy[b]);
                dx / (1.0 + dx * dx + ty * ty).sqrt()
            };
            let flux_y = |a: usize, b: usize| {
                let dy = z[b] - z[a];
                let tx = 0.5 * (gx[a] + gx[b]);
                dy / (1.0 + dy * dy + tx * tx).sqrt()
            };
            let fr = r.then(|| flux_x(k, k + 1));
            let fl = l.then(|| flux_x(k - 1, k));
            let fd = d.then(|| flux_y(k, k + w));
            let fu = u.then(|| flux_y(k - w, k));
            let div_x = match (fr, fl) {
                (Some(a), Some(b)) => a - b,
                _ => 0.0,
            };
            let div_y = match (fd, fu) {
                (Some(a), Some(b)) => a - b,
                _ => 0.0,
            };
            out[k] = div_x + div_y;
        }
    }
}

/// Working state of one solve.
struct Sweeper<'a> {
    stencil: Stencil,
    params: &'a SolverParams,
    config: &'a OpticalConfig,
    mask: DropMask,
    scratch: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(mask: &DropMask, params: &'a SolverParams, config: &'a OpticalConfig) -> Self {
        let n = mask.width() * mask.height();
        Self {
            stencil: Stencil::new(mask, params.boundary),
            params,
            config,
            mask: mask.clone(),
            scratch: vec![0.0; n],
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }

    fn tension(&mut self, z: &mut [f64]) {
        let step = self.params.tau * self.config.tension_weight;
        let substeps = (step / MAX_TENSION_SUBSTEP - 1e-12)
            .ceil()
            .clamp(1.0, MAX_SUBSTEPS as f64) as usize;
        let dt = step / substeps as f64;
        for _ in 0..substeps {
            self.stencil
                .curvature(z, &mut self.scratch, &mut self.gx, &mut self.gy);
            for &k in &self.stencil.free {
                z[k] += dt * self.scratch[k];
            }
        }
    }

    fn gravity(&self, z: &mut [f64]) {
        let [cx, cy, _] = self.config.gravity_cosines;
        if cx == 0.0 && cy == 0.0 {
            return;
        }
        let b = self.mask.area() as f64;
        let w = self.stencil.width;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &k in &self.stencil.members {
            sx += z[k] * (k % w) as f64;
            sy += z[k] * (k / w) as f64;
        }
        let (xg, yg) = (sx / b, sy / b);
        let rate = self.params.tau * self.config.gravity_weight;
        for &k in &self.stencil.free {
            let (i, j) = ((k / w) as f64, (k % w) as f64);
            z[k] -= rate * ((yg - i) * cy + (xg - j) * cx);
        }
    }

    fn volume(&self, z: &mut [f64], target: f64) {
        shift_to_volume(z, &self.stencil.free, &self.stencil.members, target);
    }
}

/// Adds one constant to `movable` so the sum over `members` equals `target`.
/// If that leaves negative heights, finds the water level `c` with
/// `Σ max(0, z + c) = target` instead.
fn shift_to_volume(z: &mut [f64], movable: &[usize], members: &[usize], target: f64) {
    if movable.is_empty() {
        return;
    }
    let fixed: f64 =
        members.iter().map(|&k| z[k]).sum::<f64>() - movable.iter().map(|&k| z[k]).sum::<f64>();
    let current: f64 = movable.iter().map(|&k| z[k]).sum();
    let need = target - fixed;
    let shift = (need - current) / movable.len() as f64;
    if movable.iter().all(|&k| z[k] + shift >= 0.0) {
        for &k in movable {
            z[k] += shift;
        }
        return;
    }
    // Water level: sort descending and grow the active set.
    let mut vals: Vec<f64> = movable.iter().map(|&k| z[k]).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut level = 0.0;
    let mut prefix = 0.0;
    for (n, &v) in vals.iter().enumerate() {
        prefix += v;
        let c = (need.max(0.0) - prefix) / (n + 1) as f64;
        let next_ok = vals.get(n + 1).is_none_or(|&nv| nv + c <= 0.0);
        if v + c >= 0.0 && next_ok {
            level = c;
            break;
        }
    }
    for &k in movable {
        z[k] = (z[k] + level).max(0.0);
    }
}

fn check_finite(z: &[f64], sweep: usize) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { sweep })
    }
}

fn rebuild(mask: &DropMask, z: Vec<f64>) -> HeightField {
    let z = z.into_iter().map(|v| v.max(0.0)).collect();
    HeightField::new(mask.clone(), z).expect("solver keeps heights finite and non-negative")
}

/// One tension update. Pinned boundary pixels stay put.
pub fn tension_step(
    hf: &HeightField,
    params: &SolverParams,
    config: &OpticalConfig,
) -> Result<HeightField> {
    let mut sw = Sweeper::new(hf.mask(), params, config);
    let mut z = hf.heights().to_vec();
    sw.tension(&mut z);
    check_finite(&z, 1)?;
    Ok(rebuild(hf.mask(), z))
}

/// One gravity update, `z ← z − τ·ĝ·((y_g − i)·cosθ_y + (x_g − j)·cosθ_x)`.
pub fn gravity_step(
    hf: &HeightField,
    params: &SolverParams,
    config: &OpticalConfig,
) -> Result<HeightField> {
    mask_centroid(hf)?;
    let sw = Sweeper::new(hf.mask(), params, config);
    let mut z = hf.heights().to_vec();
    sw.gravity(&mut z);
    check_finite(&z, 1)?;
    Ok(rebuild(hf.mask(), z))
}

/// Uniform shift onto `target_v`. With [`Boundary::Pinned`] only interior
/// pixels move.
pub fn volume_step(hf: &HeightField, target_v: f64, boundary: Boundary) -> Result<HeightField> {
    if hf.mask().area() == 0 {
        return Err(Error::domain("volume step on an empty mask"));
    }
    let st = Stencil::new(hf.mask(), boundary);
    let mut z = hf.heights().to_vec();
    shift_to_volume(&mut z, &st.free, &st.members, target_v);
    Ok(rebuild(hf.mask(), z))
}

/// Runs sweeps from the cylinder initialization until convergence.
pub fn solve_fixed_volume(
    mask: &DropMask,
    target_v: f64,
    params: &SolverParams,
    config: &OpticalConfig,
) -> Result<(HeightField, SolveReport)> {
    if !(target_v > 0.0) {
        return Err(Error::domain("target volume must be positive"));
    }
    let area = mask.area();
    if area == 0 {
        return Err(Error::domain("empty mask"));
    }
    let alpha = target_v / (area as f64).powf(1.5);
    let init = init_mesh(mask, alpha)?;
    solve_from(init, target_v, params, config, params.max_iters)
}

/// Continues sweeping from `start` for at most `max_sweeps` sweeps.
pub fn solve_from(
    start: HeightField,
    target_v: f64,
    params: &SolverParams,
    config: &OpticalConfig,
    max_sweeps: usize,
) -> Result<(HeightField, SolveReport)> {
    params.validate()?;
    config.validate()?;
    if !(target_v > 0.0) {
        return Err(Error::domain("target volume must be positive"));
    }
    let (mask, mut z) = start.into_parts();
    let mut sw = Sweeper::new(&mask, params, config);
    if sw.stencil.free.is_empty() {
        return Err(Error::domain("mask has no interior pixels"));
    }
    if params.boundary == Boundary::Pinned {
        for &k in &sw.stencil.members {
            if !sw.stencil.nbr[k].iter().all(|&b| b) {
                z[k] = 0.0;
            }
        }
    }
    sw.volume(&mut z, target_v);

    let threshold = params.convergence_rel * target_v;
    let mut prev = z.clone();
    let mut trace = vec![(0, energy_of(&rebuild(&mask, z.clone()), config).total)];
    let mut last_change = f64::INFINITY;
    let mut max_volume_error: f64 = 0.0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        sw.tension(&mut z);
        sw.gravity(&mut z);
        sw.volume(&mut z, target_v);
        check_finite(&z, sweeps)?;

        let vol: f64 = z.iter().sum();
        max_volume_error = max_volume_error.max((vol - target_v).abs() / target_v);
        last_change = z.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
        prev.copy_from_slice(&z);
        if sweeps % ENERGY_SAMPLE_INTERVAL == 0 {
            trace.push((sweeps, energy_of(&rebuild(&mask, z.clone()), config).total));
        }
        if last_change < threshold {
            converged = true;
            break;
        }
    }
    let hf = rebuild(&mask, z);
    let report = SolveReport {
        iterations_run: sweeps,
        final_energy: energy_of(&hf, config),
        last_change,
        energy_trace: trace,
        max_volume_error,
        converged,
    };
    Ok((hf, report))
}
