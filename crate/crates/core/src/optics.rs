//! Refraction at the drop surface, Fresnel transmittance, and the
//! total-reflection predicate that produces the dark band.
//!
//! Light is treated as unpolarized, so every transmittance is the mean of
//! the `s` and `p` components. The flat air/water refraction at the plate is
//! folded into an equivalent camera position `C′` on the optical axis.

use std::f64::consts::FRAC_PI_2;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::geom::{normal_map, HeightField, Vec3};
use crate::PixelSet;

/// Slope of the linearized transmittance in normal-z units.
pub const BAND_SLOPE: f64 = 7.68;

const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refraction {
    Transmitted(Vec3),
    TotalReflection,
}

impl Refraction {
    pub fn direction(self) -> Option<Vec3> {
        match self {
            Refraction::Transmitted(d) => Some(d),
            Refraction::TotalReflection => None,
        }
    }
}

/// Refracts `dir` at an interface with unit `normal`.
///
/// The tangential component of `dir` is scaled by `eta_ratio` (= n_from /
/// n_to); the normal component is rebuilt so the result is unit length and
/// stays on the same side of the interface as `dir`. Either orientation of
/// `normal` gives the same result.
pub fn refract(dir: Vec3, normal: Vec3, eta_ratio: f64) -> Result<Refraction> {
    if (dir.norm() - 1.0).abs() > UNIT_TOL || (normal.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::domain("refract needs unit direction and normal"));
    }
    let cos_in = dir.dot(&normal);
    let tangential = (dir - normal * cos_in) * eta_ratio;
    let sin2 = tangential.norm_squared();
    if sin2 > 1.0 {
        return Ok(Refraction::TotalReflection);
    }
    let along = (1.0 - sin2).sqrt() * if cos_in < 0.0 { -1.0 } else { 1.0 };
    let out = tangential + normal * along;
    Ok(Refraction::Transmitted(out / out.norm()))
}

/// Transmittance fractions for one air/water crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FresnelResult {
    pub t_s: f64,
    pub t_p: f64,
    pub t: f64,
}

/// Fresnel transmittance for a ray making angle `theta_a` with the normal on
/// the air side. Symmetric in travel direction.
pub fn fresnel_transmittance(theta_a: f64, n_a: f64, n_w: f64) -> Result<FresnelResult> {
    if !(0.0..FRAC_PI_2).contains(&theta_a) {
        return Err(Error::domain(format!(
            "incidence angle {theta_a} outside [0, π/2)"
        )));
    }
    if theta_a < 1e-9 {
        let t = 4.0 * n_a * n_w / (n_a + n_w).powi(2);
        return Ok(FresnelResult { t_s: t, t_p: t, t });
    }
    let theta_w = (n_a / n_w * theta_a.sin()).asin();
    let sum = theta_w + theta_a;
    let diff = theta_w - theta_a;
    let t_s = 1.0 - (diff.sin() / sum.sin()).powi(2);
    let t_p = 1.0 - (diff.tan() / sum.tan()).powi(2);
    let t_s = t_s.clamp(0.0, 1.0);
    let t_p = t_p.clamp(0.0, 1.0);
    Ok(FresnelResult {
        t_s,
        t_p,
        t: 0.5 * (t_s + t_p),
    })
}

/// Transmittance given the angle `theta_w` on the water side; 0 beyond the
/// critical angle.
pub fn transmittance_from_water(theta_w: f64, n_a: f64, n_w: f64) -> f64 {
    let s = n_w / n_a * theta_w.sin();
    if s >= 1.0 {
        return 0.0;
    }
    fresnel_transmittance(s.asin(), n_a, n_w)
        .map(|f| f.t)
        .unwrap_or(0.0)
}

/// Linearized band transmittance `7.68·(N_z − N_crit)`, zero inside the band.
pub fn band_transmittance_linear(n_z: f64, n_crit: f64) -> f64 {
    if n_z < n_crit {
        0.0
    } else {
        (BAND_SLOPE * (n_z - n_crit)).clamp(0.0, 1.0)
    }
}

/// Normal-z value at and below which the surface is totally reflecting,
/// `cos(asin(n_a/n_w) + θ_C′)`.
pub fn critical_normal_z(theta_cprime: f64, n_a: f64, n_w: f64) -> Result<f64> {
    if !(0.0..FRAC_PI_2).contains(&theta_cprime) {
        return Err(Error::domain(format!(
            "θ_C′ = {theta_cprime} outside [0, π/2)"
        )));
    }
    let angle = (n_a / n_w).asin() + theta_cprime;
    Ok(if angle >= FRAC_PI_2 { 0.0 } else { angle.cos() })
}

/// Dark-band geometry at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkBandParams {
    pub n_crit: f64,
    pub band_halfwidth: f64,
    pub theta_cprime: f64,
}

impl DarkBandParams {
    pub fn new(theta_cprime: f64, band_halfwidth: f64, n_a: f64, n_w: f64) -> Result<Self> {
        if !(band_halfwidth > 0.0) {
            return Err(Error::domain("band half-width must be positive"));
        }
        Ok(Self {
            n_crit: critical_normal_z(theta_cprime, n_a, n_w)?,
            band_halfwidth,
            theta_cprime,
        })
    }

    pub fn in_ring(&self, n_z: f64) -> bool {
        (n_z - self.n_crit).abs() <= self.band_halfwidth
    }
}

/// Equivalent camera for refraction at `plate_point` on the plate `z = 0`.
///
/// The camera may sit on either side of the plate; the result lies on the
/// same side, on the camera's axis, at distance
/// `(n_w/n_a)·z_c·√(1 + ((n_w²−n_a²)/n_w²)·ρ²/z_c²)` where ρ is the radial
/// offset of the plate point from the axis.
pub fn equivalent_camera(camera: Vec3, plate_point: Vec3, n_a: f64, n_w: f64) -> Result<Vec3> {
    let z_c = camera.z.abs();
    if !(z_c > 0.0) || !z_c.is_finite() {
        return Err(Error::domain("camera must be off the plate"));
    }
    let dx = plate_point.x - camera.x;
    let dy = plate_point.y - camera.y;
    let rho2 = dx * dx + dy * dy;
    let k = (n_w * n_w - n_a * n_a) / (n_w * n_w);
    let dist = n_w / n_a * z_c * (1.0 + k * rho2 / (z_c * z_c)).sqrt();
    Ok(Vec3::new(camera.x, camera.y, dist.copysign(camera.z)))
}

/// Paraxial equivalent camera, `C′ = (n_w/n_a)·C_z` on the axis.
pub fn equivalent_camera_paraxial(camera: Vec3, n_a: f64, n_w: f64) -> Result<Vec3> {
    if camera.z == 0.0 || !camera.z.is_finite() {
        return Err(Error::domain("camera must be off the plate"));
    }
    Ok(Vec3::new(camera.x, camera.y, camera.z * n_w / n_a))
}

/// Camera resolved against a particular image grid.
///
/// World frame: `x` = column, `y` = row, plate at `z = 0`, scene at `z > 0`,
/// camera at `z = −camera_z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub position: Vec3,
    pub n_a: f64,
    pub n_w: f64,
    pub paraxial: bool,
    pub at_infinity: bool,
}

/// The in-water ray arriving at a surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Incidence {
    /// Unit direction `R_i` inside the water.
    pub direction: Vec3,
    /// Where the ray crosses the plate `z = 0`.
    pub plate_entry: [f64; 2],
    pub equivalent_camera: Vec3,
}

impl CameraModel {
    pub fn new(config: &OpticalConfig, width: usize, height: usize) -> Self {
        let [cx, cy] = config.principal_point_for(width, height);
        Self {
            position: Vec3::new(cx, cy, -config.camera_z),
            n_a: config.n_air,
            n_w: config.n_water,
            paraxial: config.paraxial,
            at_infinity: config.camera_at_infinity,
        }
    }

    fn equivalent_at(&self, entry: [f64; 2]) -> Vec3 {
        let plate = Vec3::new(entry[0], entry[1], 0.0);
        let c = if self.paraxial {
            equivalent_camera_paraxial(self.position, self.n_a, self.n_w)
        } else {
            equivalent_camera(self.position, plate, self.n_a, self.n_w)
        };
        c.expect("camera_z validated positive")
    }

    /// In-water incidence ray reaching `surface` (a point with `z ≥ 0`).
    ///
    /// `C′` depends on where the ray crosses the plate, which depends on
    /// `C′`; the fixed point converges in a few iterations because drop
    /// heights are tiny next to the camera distance.
    pub fn incidence(&self, surface: Vec3) -> Incidence {
        if self.at_infinity {
            return Incidence {
                direction: Vec3::z(),
                plate_entry: [surface.x, surface.y],
                equivalent_camera: Vec3::new(surface.x, surface.y, f64::NEG_INFINITY),
            };
        }
        let mut entry = [surface.x, surface.y];
        let mut cprime = self.equivalent_at(entry);
        for _ in 0..50 {
            let s = -cprime.z / (surface.z - cprime.z);
            let next = [
                cprime.x + (surface.x - cprime.x) * s,
                cprime.y + (surface.y - cprime.y) * s,
            ];
            let moved = (next[0] - entry[0]).abs() + (next[1] - entry[1]).abs();
            entry = next;
            cprime = self.equivalent_at(entry);
            if moved < 1e-12 || self.paraxial {
                break;
            }
        }
        let d = surface - cprime;
        Incidence {
            direction: d / d.norm(),
            plate_entry: entry,
            equivalent_camera: cprime,
        }
    }

    /// Angle between the incidence ray and the optical axis, θ_C′.
    pub fn theta_cprime(&self, surface: Vec3) -> f64 {
        self.incidence(surface).direction.z.clamp(-1.0, 1.0).acos()
    }

    /// Transmittance of the flat plate crossing for an in-water direction.
    pub fn plate_transmittance(&self, in_water: Vec3) -> f64 {
        let theta_w = in_water.z.abs().clamp(0.0, 1.0).acos();
        transmittance_from_water(theta_w, self.n_a, self.n_w)
    }

    /// Direction of the camera ray through the plate point `(x, y, 0)`.
    pub fn direct_ray(&self, x: f64, y: f64) -> Vec3 {
        if self.at_infinity {
            return Vec3::z();
        }
        let d = Vec3::new(x, y, 0.0) - self.position;
        d / d.norm()
    }

    /// Where a scene point would appear on the plate without any drop.
    pub fn project_to_plate(&self, p: Vec3) -> Option<[f64; 2]> {
        if self.at_infinity {
            return Some([p.x, p.y]);
        }
        let depth = p.z - self.position.z;
        if depth <= 0.0 {
            return None;
        }
        let s = -self.position.z / depth;
        Some([
            self.position.x + (p.x - self.position.x) * s,
            self.position.y + (p.y - self.position.y) * s,
        ])
    }
}

/// Pixels where the surface normal is at or below the per-pixel critical
/// value, i.e. where light from the scene cannot reach the camera.
pub fn dark_band_mask(hf: &HeightField, config: &OpticalConfig) -> Result<PixelSet> {
    config.validate()?;
    let cam = CameraModel::new(config, hf.width(), hf.height());
    let normals = normal_map(hf);
    let mut band = PixelSet::empty(hf.width(), hf.height());
    for (i, j) in hf.mask().pixels() {
        let p = Vec3::new(j as f64, i as f64, hf.get(i, j));
        let n_crit = critical_normal_z(cam.theta_cprime(p), cam.n_a, cam.n_w)?;
        if normals[i * hf.width() + j].z <= n_crit {
            band.insert(i, j);
        }
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::DropMask;
    use proptest::prelude::*;

    const NA: f64 = 1.0;
    const NW: f64 = 4.0 / 3.0;

    #[test]
    fn normal_incidence_passes_straight() {
        let out = refract(Vec3::z(), -Vec3::z(), NW / NA).unwrap();
        assert_eq!(out.direction().unwrap(), Vec3::z());
    }

    #[test]
    fn critical_angle_grazes() {
        let theta = (NA / NW).asin();
        let n = Vec3::z();
        let d = Vec3::new(theta.sin(), 0.0, theta.cos());
        let out = refract(d, n, NW / NA).unwrap().direction().unwrap();
        assert!(out.dot(&n).abs() <= 1e-6);
    }

    #[test]
    fn beyond_critical_reflects() {
        let t = 60f64.to_radians();
        let d = Vec3::new(t.sin(), 0.0, t.cos());
        assert_eq!(
            refract(d, Vec3::z(), NW / NA).unwrap(),
            Refraction::TotalReflection
        );
    }

    #[test]
    fn refract_rejects_non_unit() {
        assert!(refract(Vec3::new(0.0, 0.0, 2.0), Vec3::z(), 1.0).is_err());
    }

    #[test]
    fn fresnel_limits() {
        let t0 = fresnel_transmittance(0.0, NA, NW).unwrap().t;
        assert!((t0 - 0.980).abs() <= 1e-3);
        let small = fresnel_transmittance(1e-4, NA, NW).unwrap().t;
        assert!((small - t0).abs() < 1e-6, "continuous at the limit form");
        let brewster = (NW / NA).atan();
        let f = fresnel_transmittance(brewster, NA, NW).unwrap();
        assert!((f.t_p - 1.0).abs() <= 1e-9);
        assert!(fresnel_transmittance(FRAC_PI_2, NA, NW).is_err());
    }

    #[test]
    fn fresnel_grazing_slope() {
        // Exact Fresnel near grazing follows (2/cosθ_t)(n_a/n_w + n_w/n_a)(π/2 − θ_a).
        let cos_t = (1.0 - (NA / NW).powi(2)).sqrt();
        let slope = 2.0 / cos_t * (NA / NW + NW / NA);
        let th = 89.99f64.to_radians();
        let t = fresnel_transmittance(th, NA, NW).unwrap().t;
        assert!((t / (FRAC_PI_2 - th) - slope).abs() / slope < 1e-3);
    }

    #[test]
    fn band_linear_examples() {
        let nc = 0.661;
        assert_eq!(band_transmittance_linear(nc, nc), 0.0);
        let eps = 0.02 * std::f64::consts::PI;
        assert!((band_transmittance_linear(nc + eps, nc) - 0.482).abs() < 1e-3);
        // ring average of the linear law over the bright half of the ring
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|k| band_transmittance_linear(nc + eps * (k as f64 + 0.5) / n as f64, nc))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.241).abs() < 1e-3);
        assert_eq!(band_transmittance_linear(1.0, nc), 1.0);
        assert_eq!(band_transmittance_linear(0.5, nc), 0.0);
    }

    #[test]
    fn critical_normal_examples() {
        assert!((critical_normal_z(0.0, 3.0, 4.0).unwrap() - 0.661).abs() <= 1e-3);
        assert!(critical_normal_z(0.0, 1.0, 1.0).unwrap().abs() < 1e-12);
        let ten = critical_normal_z(10f64.to_radians(), 3.0, 4.0).unwrap();
        assert!((ten - (0.75f64.asin() + 10f64.to_radians()).cos()).abs() < 1e-12);
        assert!((ten - 0.522).abs() < 1e-3);
        assert_eq!(critical_normal_z(1.5, 3.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn equivalent_camera_examples() {
        let c = Vec3::new(0.0, 0.0, 300.0);
        let on_axis = equivalent_camera(c, Vec3::zeros(), 3.0, 4.0).unwrap();
        assert!((on_axis.z - 400.0).abs() < 1e-9);
        let off = equivalent_camera(c, Vec3::new(30.0, 30.0, 0.0), 3.0, 4.0).unwrap();
        assert!(off.z > 400.0);
        assert!((off.z - 400.0 * (1.0 + 7.0 / 16.0 * 0.02f64).sqrt()).abs() < 1e-9);
        assert!((off.z - 401.75).abs() < 1e-2);
        let below = equivalent_camera(Vec3::new(0.0, 0.0, -300.0), Vec3::zeros(), 3.0, 4.0);
        assert!((below.unwrap().z + 400.0).abs() < 1e-9);
        assert!(equivalent_camera(Vec3::zeros(), Vec3::zeros(), 3.0, 4.0).is_err());
    }

    #[test]
    fn incidence_matches_two_interface_trace() {
        // camera ray → plate → water must reach the surface point along R_i
        let cfg = OpticalConfig::water();
        let cam = CameraModel::new(&cfg, 400, 300);
        let p = Vec3::new(330.0, 40.0, 25.0);
        let inc = cam.incidence(p);
        let entry = Vec3::new(inc.plate_entry[0], inc.plate_entry[1], 0.0);
        let air = (entry - cam.position).normalize();
        let water = refract(air, Vec3::z(), NA / NW)
            .unwrap()
            .direction()
            .unwrap();
        let to_p = (p - entry).normalize();
        assert!((water - to_p).norm() < 1e-9);
        assert!((water - inc.direction).norm() < 1e-9);
    }

    #[test]
    fn flat_field_has_no_band() {
        let mask = DropMask::disk(40, 40, 20.0, 20.0, 12.0).unwrap();
        let band = dark_band_mask(&HeightField::flat(mask), &OpticalConfig::water()).unwrap();
        assert_eq!(band.count(), 0);
    }

    proptest! {
        #[test]
        fn snell_round_trip(tx in -0.6f64..0.6, ty in -0.6f64..0.6, nx in -0.3f64..0.3, ny in -0.3f64..0.3) {
            let d = Vec3::new(tx, ty, 1.0).normalize();
            let n = Vec3::new(nx, ny, 1.0).normalize();
            let eta = NW / NA;
            if let Refraction::Transmitted(o) = refract(d, n, eta).unwrap() {
                let back = refract(o, -n, 1.0 / eta).unwrap().direction().unwrap();
                prop_assert!((back - d).norm() < 1e-9);
            }
        }

        #[test]
        fn fresnel_bounded(theta in 0.0f64..(FRAC_PI_2 - 1e-4)) {
            let f = fresnel_transmittance(theta, NA, NW).unwrap();
            prop_assert!((0.0..=1.0).contains(&f.t_s));
            prop_assert!((0.0..=1.0).contains(&f.t_p));
            prop_assert!((f.t - 0.5 * (f.t_s + f.t_p)).abs() < 1e-15);
            let g = fresnel_transmittance((theta + 1e-7).min(FRAC_PI_2 - 1e-5), NA, NW).unwrap();
            prop_assert!((f.t - g.t).abs() < 1e-3);
        }

        #[test]
        fn critical_normal_decreasing(a in 0.0f64..0.72, b in 0.0f64..0.72) {
            prop_assume!(a < b);
            let fa = critical_normal_z(a, NA, NW).unwrap();
            let fb = critical_normal_z(b, NA, NW).unwrap();
            prop_assert!(fb < fa);
        }
    }
}
