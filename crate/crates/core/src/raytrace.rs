//! Inverse raytracing through a drop surface and angular dewarping.
//!
//! Each drop pixel `(i, j)` sees the surface point `(j, i, z(i, j))` above
//! it. The in-water ray comes from the equivalent camera `C′`, refracts out
//! of the curved surface, and continues toward the scene.

use rayon::prelude::*;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::geom::{normal_map, HeightField, RasterGray, Vec3};
use crate::optics::{refract, transmittance_from_water, CameraModel, Refraction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::domain("ray direction must be nonzero and finite"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Parameter where the ray meets the plane `z = depth`, if ahead.
    pub fn hit_depth(&self, depth: f64) -> Option<f64> {
        if self.direction.z <= 0.0 {
            return None;
        }
        let t = (depth - self.origin.z) / self.direction.z;
        (t >= 0.0).then_some(t)
    }

    /// Squared distance from `p` to the line.
    pub fn distance_squared(&self, p: Vec3) -> f64 {
        let d = p - self.origin;
        (d - self.direction * d.dot(&self.direction)).norm_squared()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trace {
    Outbound(Ray),
    TotalReflection,
}

/// A successfully traced drop pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Traced {
    pub ray: Ray,
    /// In-water incidence direction.
    pub incident: Vec3,
    /// Transmittance of the curved drop surface.
    pub t_surface: f64,
    /// Transmittance of the flat plate crossing.
    pub t_plate: f64,
}

impl Traced {
    pub fn transmittance(&self) -> f64 {
        self.t_surface * self.t_plate
    }
}

/// Precomputed normals and camera for repeated tracing through one drop.
pub struct DropOptics<'a> {
    hf: &'a HeightField,
    normals: Vec<Vec3>,
    camera: CameraModel,
    eta: f64,
}

impl<'a> DropOptics<'a> {
    pub fn new(hf: &'a HeightField, config: &OpticalConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            hf,
            normals: normal_map(hf),
            camera: CameraModel::new(config, hf.width(), hf.height()),
            eta: config.n_water / config.n_air,
        })
    }

    pub fn height_field(&self) -> &HeightField {
        self.hf
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// Surface point and unit normal at continuous plate position `(x, y)`,
    /// interpolated bilinearly over the surrounding mask pixels only.
    pub fn surface(&self, x: f64, y: f64) -> Option<(Vec3, Vec3)> {
        let mask = self.hf.mask();
        let (j0, i0) = (x.floor(), y.floor());
        let (fx, fy) = (x - j0, y - i0);
        let (j0, i0) = (j0 as isize, i0 as isize);
        let w = self.hf.width();
        let mut acc_w = 0.0;
        let mut acc_z = 0.0;
        let mut acc_n = Vec3::zeros();
        for (di, dj, wt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (0, 1, fx * (1.0 - fy)),
            (1, 0, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let (i, j) = (i0 + di, j0 + dj);
            if wt <= 0.0 || !mask.contains_signed(i, j) {
                continue;
            }
            let k = i as usize * w + j as usize;
            acc_w += wt;
            acc_z += wt * self.hf.heights()[k];
            acc_n += self.normals[k] * wt;
        }
        if acc_w < 1e-12 {
            return None;
        }
        let n = acc_n / acc_w;
        Some((Vec3::new(x, y, acc_z / acc_w), n / n.norm()))
    }

    /// Traces the plate position `(x, y)`. `Ok(None)` means total reflection.
    pub fn trace(&self, x: f64, y: f64) -> Result<Option<Traced>> {
        let (p, n) = self
            .surface(x, y)
            .ok_or_else(|| Error::domain(format!("({x}, {y}) is outside the drop mask")))?;
        Ok(self.trace_at(p, n))
    }

    fn trace_at(&self, p: Vec3, n: Vec3) -> Option<Traced> {
        let incident = self.camera.incidence(p).direction;
        let out = match refract(incident, n, self.eta).expect("unit vectors") {
            Refraction::Transmitted(d) => d,
            Refraction::TotalReflection => return None,
        };
        let cos_w = incident.dot(&n).abs().min(1.0);
        Some(Traced {
            ray: Ray {
                origin: p,
                direction: out,
            },
            incident,
            t_surface: transmittance_from_water(cos_w.acos(), self.camera.n_a, self.camera.n_w),
            t_plate: self.camera.plate_transmittance(incident),
        })
    }

    /// Traces the center of pixel `(i, j)`.
    pub fn trace_pixel(&self, i: usize, j: usize) -> Option<Traced> {
        if !self.hf.mask().contains(i, j) {
            return None;
        }
        let k = i * self.hf.width() + j;
        let p = Vec3::new(j as f64, i as f64, self.hf.heights()[k]);
        self.trace_at(p, self.normals[k])
    }
}

/// Outbound ray for the plate point `x_plate` (its `z` is ignored).
pub fn trace_drop_pixel(x_plate: Vec3, hf: &HeightField, config: &OpticalConfig) -> Result<Trace> {
    let optics = DropOptics::new(hf, config)?;
    Ok(match optics.trace(x_plate.x, x_plate.y)? {
        Some(t) => Trace::Outbound(t.ray),
        None => Trace::TotalReflection,
    })
}

/// Perspective division `(r_x / r_z, r_y / r_z)` of a ray direction.
pub fn angular_project(ray: &Ray) -> Result<[f64; 2]> {
    let d = ray.direction;
    if d.z <= 0.0 {
        return Err(Error::BehindCamera(d.z));
    }
    Ok([d.x / d.z, d.y / d.z])
}

/// Angular coordinates of every traced drop pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardMap {
    pub width: usize,
    pub height: usize,
    /// `(u, v)` per pixel; `None` outside the mask or totally reflected.
    pub uv: Vec<Option<[f64; 2]>>,
}

impl ForwardMap {
    pub fn build(hf: &HeightField, config: &OpticalConfig) -> Result<Self> {
        let optics = DropOptics::new(hf, config)?;
        let w = hf.width();
        let uv = (0..w * hf.height())
            .into_par_iter()
            .map(|k| {
                optics
                    .trace_pixel(k / w, k % w)
                    .and_then(|t| angular_project(&t.ray).ok())
            })
            .collect();
        Ok(Self {
            width: w,
            height: hf.height(),
            uv,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        self.uv[i * self.width + j]
    }

    pub fn valid_count(&self) -> usize {
        self.uv.iter().filter(|v| v.is_some()).count()
    }

    /// Bounding box `[u_min, v_min, u_max, v_max]` of all valid samples.
    pub fn extent(&self) -> Option<[f64; 4]> {
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for [u, v] in self.uv.iter().flatten() {
            b = [b[0].min(*u), b[1].min(*v), b[2].max(*u), b[3].max(*v)];
        }
        (b[0] <= b[2]).then_some(b)
    }

    /// Triangles of the pixel mesh whose corners are all valid, as
    /// `(pixel corners, uv corners)`. Every valid quad gives two triangles
    /// with the same orientation in the plate plane.
    fn triangles(&self) -> Vec<Triangle> {
        let mut out = Vec::new();
        for i in 0..self.height.saturating_sub(1) {
            for j in 0..self.width.saturating_sub(1) {
                let (Some(a), Some(b), Some(c), Some(d)) = (
                    self.get(i, j),
                    self.get(i, j + 1),
                    self.get(i + 1, j),
                    self.get(i + 1, j + 1),
                ) else {
                    continue;
                };
                let (x, y) = (j as f64, i as f64);
                out.push(([[x, y], [x + 1.0, y], [x, y + 1.0]], [a, b, c]));
                out.push(([[x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0]], [b, d, c]));
            }
        }
        out
    }

    /// Median over mesh triangles of the linear magnification
    /// `sqrt(|mapped area| / plate area)`; plate triangles have area 1/2.
    pub fn median_magnification(&self) -> Option<f64> {
        let mags = self
            .triangles()
            .iter()
            .map(|(_, uv)| cross2(uv[0], uv[1], uv[2]).abs().sqrt())
            .collect();
        crate::stereo::median(mags)
    }

    /// Counts of mesh triangles with positive and negative Jacobian of the
    /// plate → angle map.
    pub fn jacobian_signs(&self) -> (usize, usize) {
        let (mut pos, mut neg) = (0, 0);
        for (_, uv) in self.triangles() {
            let a = cross2(uv[0], uv[1], uv[2]);
            if a > 0.0 {
                pos += 1;
            } else if a < 0.0 {
                neg += 1;
            }
        }
        (pos, neg)
    }
}

fn cross2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Square sampling grid in angle space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularGrid {
    pub center: [f64; 2],
    /// Angle units per output pixel.
    pub step: f64,
    pub size: usize,
}

impl AngularGrid {
    /// Smallest square grid of `size` pixels covering `extent`.
    pub fn covering(extent: [f64; 4], size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::domain("dewarp resolution must be at least 2"));
        }
        let span = (extent[2] - extent[0]).max(extent[3] - extent[1]);
        if !(span > 0.0) {
            return Err(Error::domain("degenerate angular extent"));
        }
        Ok(Self {
            center: [0.5 * (extent[0] + extent[2]), 0.5 * (extent[1] + extent[3])],
            step: span / (size - 1) as f64,
            size,
        })
    }

    /// Output `(col, row)` of angle `(u, v)`, continuous.
    pub fn to_pixel(&self, uv: [f64; 2]) -> [f64; 2] {
        let half = 0.5 * (self.size - 1) as f64;
        [
            (uv[0] - self.center[0]) / self.step + half,
            (uv[1] - self.center[1]) / self.step + half,
        ]
    }

    pub fn to_angle(&self, col: f64, row: f64) -> [f64; 2] {
        let half = 0.5 * (self.size - 1) as f64;
        [
            self.center[0] + (col - half) * self.step,
            self.center[1] + (row - half) * self.step,
        ]
    }
}

/// Pixel corners and their mapped corners.
type Triangle = ([[f64; 2]; 3], [[f64; 2]; 3]);

/// A drop image resampled onto a regular angular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Dewarped {
    pub grid: AngularGrid,
    pub image: RasterGray,
    pub valid: Vec<bool>,
    /// Plate position `[x, y]` each output pixel was sampled from.
    pub source: Vec<[f64; 2]>,
}

impl Dewarped {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.grid.size + col]
    }

    /// Plate position for a continuous output position, interpolating the
    /// source table over valid neighbors and falling back to the nearest
    /// valid pixel within one step.
    pub fn source_at(&self, col: f64, row: f64) -> Option<[f64; 2]> {
        let n = self.grid.size as isize;
        let (c0, r0) = (col.floor() as isize, row.floor() as isize);
        let (fc, fr) = (col - c0 as f64, row - r0 as f64);
        let mut acc = [0.0, 0.0];
        let mut wsum = 0.0;
        let mut nearest: Option<(f64, [f64; 2])> = None;
        for (dr, dc, wt) in [
            (0, 0, (1.0 - fc) * (1.0 - fr)),
            (0, 1, fc * (1.0 - fr)),
            (1, 0, (1.0 - fc) * fr),
            (1, 1, fc * fr),
        ] {
            let (r, c) = (r0 + dr, c0 + dc);
            if r < 0 || c < 0 || r >= n || c >= n {
                continue;
            }
            let k = (r * n + c) as usize;
            if !self.valid[k] {
                continue;
            }
            let s = self.source[k];
            acc = [acc[0] + wt * s[0], acc[1] + wt * s[1]];
            wsum += wt;
            let d = (c as f64 - col).powi(2) + (r as f64 - row).powi(2);
            if nearest.is_none_or(|(best, _)| d < best) {
                nearest = Some((d, s));
            }
        }
        if wsum > 0.999 {
            Some([acc[0] / wsum, acc[1] / wsum])
        } else {
            nearest.map(|(_, s)| s)
        }
    }
}

/// Rasterizes the pixel mesh of `map` after sending each vertex through
/// `to_px` into a `width × height` output. Returns, per output pixel, the
/// plate position interpolated linearly inside its triangle and whether any
/// triangle covered it. The first triangle to cover a pixel wins.
pub(crate) fn rasterize_mesh(
    map: &ForwardMap,
    to_px: impl Fn([f64; 2]) -> [f64; 2],
    width: usize,
    height: usize,
) -> (Vec<[f64; 2]>, Vec<bool>) {
    let mut source = vec![[f64::NAN, f64::NAN]; width * height];
    let mut valid = vec![false; width * height];
    for (xy, uv) in map.triangles() {
        let p = uv.map(&to_px);
        let area = cross2(p[0], p[1], p[2]);
        if area.abs() < 1e-15 {
            continue;
        }
        let lo_c = p
            .iter()
            .map(|q| q[0])
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let hi_c = p
            .iter()
            .map(|q| q[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .floor();
        let lo_r = p
            .iter()
            .map(|q| q[1])
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let hi_r = p
            .iter()
            .map(|q| q[1])
            .fold(f64::NEG_INFINITY, f64::max)
            .floor();
        if hi_c < 0.0 || hi_r < 0.0 || width == 0 || height == 0 {
            continue;
        }
        let hi_c = hi_c.min((width - 1) as f64) as usize;
        let hi_r = hi_r.min((height - 1) as f64) as usize;
        for r in lo_r as usize..=hi_r {
            for c in lo_c as usize..=hi_c {
                let k = r * width + c;
                if valid[k] {
                    continue;
                }
                let q = [c as f64, r as f64];
                let w0 = cross2(p[1], p[2], q) / area;
                let w1 = cross2(p[2], p[0], q) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9 {
                    continue;
                }
                source[k] = [
                    w0 * xy[0][0] + w1 * xy[1][0] + w2 * xy[2][0],
                    w0 * xy[0][1] + w1 * xy[1][1] + w2 * xy[2][1],
                ];
                valid[k] = true;
            }
        }
    }
    (source, valid)
}

/// Dewarps onto a grid covering this drop's own angular extent.
pub fn dewarp_image(
    image: &RasterGray,
    hf: &HeightField,
    config: &OpticalConfig,
    out_resolution: usize,
) -> Result<Dewarped> {
    let map = ForwardMap::build(hf, config)?;
    let extent = map
        .extent()
        .filter(|e| e[2] > e[0] || e[3] > e[1])
        .ok_or_else(|| Error::EmptyOutput("every drop pixel is totally reflected".into()))?;
    let grid = AngularGrid::covering(extent, out_resolution)?;
    dewarp_on_grid(image, &map, grid)
}

/// Dewarps with an explicit grid, e.g. one shared by several drops.
///
/// The pixel mesh is split into triangles and each triangle is rasterized
/// in angle space; output pixels take the plate position interpolated
/// linearly inside their triangle and sample the image there.
pub fn dewarp_on_grid(image: &RasterGray, map: &ForwardMap, grid: AngularGrid) -> Result<Dewarped> {
    if image.width() != map.width || image.height() != map.height {
        return Err(Error::domain("image and drop grids differ"));
    }
    let n = grid.size;
    let (source, valid) = rasterize_mesh(map, |uv| grid.to_pixel(uv), n, n);
    if !valid.iter().any(|&v| v) {
        return Err(Error::EmptyOutput(
            "dewarped drop covers no output pixels".into(),
        ));
    }
    let data = (0..n * n)
        .map(|k| {
            if valid[k] {
                image.bilinear(source[k][0], source[k][1])
            } else {
                0.0
            }
        })
        .collect();
    Ok(Dewarped {
        grid,
        image: RasterGray::from_vec(n, n, data)?,
        valid,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{DropMask, HeightField};
    use crate::optics::dark_band_mask;

    fn cfg() -> OpticalConfig {
        OpticalConfig::water()
    }

    fn cap(size: usize, radius: f64, height: f64) -> HeightField {
        let c = (size - 1) as f64 / 2.0;
        let mask = DropMask::disk(size, size, c, c, radius).unwrap();
        let r_s = (radius * radius + height * height) / (2.0 * height);
        HeightField::from_fn(mask, |i, j| {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            ((r_s * r_s - d2).max(0.0).sqrt() - (r_s - height)).max(0.0)
        })
        .unwrap()
    }

    #[test]
    fn angular_project_examples() {
        let o = Vec3::zeros();
        let r = Ray::new(o, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(angular_project(&r).unwrap(), [0.0, 0.0]);
        let r = Ray::new(o, Vec3::new(1.0, 0.0, 1.0)).unwrap();
        let [u, v] = angular_project(&r).unwrap();
        assert!((u - 1.0).abs() < 1e-12 && v.abs() < 1e-12);
        let r = Ray::new(o, Vec3::new(0.2, -0.1, 0.5)).unwrap();
        let [u, v] = angular_project(&r).unwrap();
        assert!((u - 0.4).abs() < 1e-12 && (v + 0.2).abs() < 1e-12);
        let r = Ray::new(o, Vec3::new(0.0, 1.0, -0.1)).unwrap();
        assert!(matches!(angular_project(&r), Err(Error::BehindCamera(_))));
    }

    #[test]
    fn flat_region_under_camera_goes_straight() {
        let mask = DropMask::disk(41, 41, 20.0, 20.0, 15.0).unwrap();
        let hf = HeightField::constant(mask, 0.0).unwrap();
        let t = trace_drop_pixel(Vec3::new(20.0, 20.0, 0.0), &hf, &cfg()).unwrap();
        let Trace::Outbound(ray) = t else {
            panic!("flat surface cannot reflect")
        };
        assert!((ray.direction - Vec3::z()).norm() < 1e-12);
        assert_eq!(angular_project(&ray).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn dark_band_pixel_reflects() {
        let hf = cap(101, 45.0, 40.0);
        let band = dark_band_mask(&hf, &cfg()).unwrap();
        // pick the band pixel with the smallest normal z, well inside
        let normals = normal_map(&hf);
        let (i, j) = band
            .pixels()
            .min_by(|a, b| {
                normals[a.0 * 101 + a.1]
                    .z
                    .total_cmp(&normals[b.0 * 101 + b.1].z)
            })
            .unwrap();
        let t = trace_drop_pixel(Vec3::new(j as f64, i as f64, 0.0), &hf, &cfg()).unwrap();
        assert_eq!(t, Trace::TotalReflection);
    }

    /// Independent two-interface tracer: camera → flat plate (air → water)
    /// → surface point → air, with Snell's law written out in angles.
    fn snell_trace(camera: Vec3, surface: Vec3, normal: Vec3, n_a: f64, n_w: f64) -> Vec3 {
        // find the plate entry by bisection on the refracted path
        let horiz = Vec3::new(surface.x - camera.x, surface.y - camera.y, 0.0);
        let dist = horiz.norm();
        let dir_h = horiz / dist;
        let depth_air = -camera.z;
        let depth_w = surface.z;
        let (mut lo, mut hi) = (0.0, dist);
        for _ in 0..200 {
            let s = 0.5 * (lo + hi);
            let sin_a = s / (s * s + depth_air * depth_air).sqrt();
            let sin_w = sin_a * n_a / n_w;
            let reach = s + depth_w * sin_w / (1.0 - sin_w * sin_w).sqrt();
            if reach < dist {
                lo = s
            } else {
                hi = s
            }
        }
        let s = 0.5 * (lo + hi);
        let sin_a = s / (s * s + depth_air * depth_air).sqrt();
        let sin_w = sin_a * n_a / n_w;
        let inc = dir_h * sin_w + Vec3::z() * (1.0 - sin_w * sin_w).sqrt();
        // surface: angle form of Snell's law in the plane of incidence
        let cos_i = inc.dot(&normal);
        let theta_i = cos_i.acos();
        let theta_t = (n_w / n_a * theta_i.sin()).asin();
        let tangent = (inc - normal * cos_i).normalize();
        normal * theta_t.cos() + tangent * theta_t.sin()
    }

    #[test]
    fn cap_pixel_matches_two_interface_trace() {
        let hf = cap(121, 50.0, 30.0);
        let config = OpticalConfig {
            principal_point: Some([10.0, -30.0]),
            camera_z: 900.0,
            ..cfg()
        };
        let optics = DropOptics::new(&hf, &config).unwrap();
        for (i, j) in [(60, 85), (35, 60), (78, 42)] {
            let t = optics.trace_pixel(i, j).unwrap();
            let p = Vec3::new(j as f64, i as f64, hf.get(i, j));
            let n = normal_map(&hf)[i * 121 + j];
            let want = snell_trace(optics.camera().position, p, n, 1.0, config.n_water);
            assert!((t.ray.direction - want).norm() < 1e-6, "{i},{j}");
        }
    }

    #[test]
    fn normal_incidence_transmittance() {
        let mask = DropMask::disk(21, 21, 10.0, 10.0, 8.0).unwrap();
        let hf = HeightField::constant(mask, 0.0).unwrap();
        let t = DropOptics::new(&hf, &cfg())
            .unwrap()
            .trace_pixel(10, 10)
            .unwrap();
        let n: f64 = 4.0 / 3.0;
        let t0 = 4.0 * n / ((1.0 + n) * (1.0 + n));
        assert!((t.t_surface - t0).abs() < 1e-9);
        assert!((t.t_plate - t0).abs() < 1e-9);
    }

    #[test]
    fn subpixel_trace_is_continuous() {
        let hf = cap(81, 35.0, 18.0);
        let optics = DropOptics::new(&hf, &cfg()).unwrap();
        let base = optics.trace(40.0, 52.0).unwrap().unwrap().ray.direction;
        for k in 1..10 {
            let d = optics
                .trace(40.0 + 0.01 * k as f64, 52.0)
                .unwrap()
                .unwrap()
                .ray
                .direction;
            assert!((d - base).norm() < 0.01 * k as f64 * 0.2);
        }
        assert!(optics.trace(0.0, 0.0).is_err());
    }

    #[test]
    fn flat_dewarp_is_affine() {
        let mask = DropMask::disk(61, 61, 30.0, 30.0, 25.0).unwrap();
        let hf = HeightField::constant(mask, 0.0).unwrap();
        let config = OpticalConfig {
            camera_z: 1000.0,
            ..cfg()
        };
        let img = RasterGray::from_fn(61, 61, |i, j| {
            (0.01 * (i as f64) + 0.013 * j as f64).min(1.0)
        });
        let d = dewarp_image(&img, &hf, &config, 64).unwrap();
        // u = (x − 30)/1000 so the source is affine in the output pixel
        for r in (0..64).step_by(7) {
            for c in (0..64).step_by(7) {
                if !d.is_valid(r, c) {
                    continue;
                }
                let [u, v] = d.grid.to_angle(c as f64, r as f64);
                let s = d.source[r * 64 + c];
                assert!((s[0] - (30.0 + 1000.0 * u)).abs() < 1e-6);
                assert!((s[1] - (30.0 + 1000.0 * v)).abs() < 1e-6);
                let want = img.bilinear(s[0], s[1]);
                assert!((d.image.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_jacobian_has_one_sign() {
        let hf = cap(101, 45.0, 25.0);
        let map = ForwardMap::build(&hf, &cfg()).unwrap();
        let (pos, neg) = map.jacobian_signs();
        assert!(pos == 0 || neg == 0, "{pos} {neg}");
        assert!(pos + neg > 1000);
    }

    #[test]
    fn every_traced_pixel_lands_in_dewarp_domain() {
        let hf = cap(81, 35.0, 20.0);
        let img = RasterGray::filled(81, 81, 0.5);
        let d = dewarp_image(&img, &hf, &cfg(), 128).unwrap();
        let map = ForwardMap::build(&hf, &cfg()).unwrap();
        let n = d.grid.size as f64;
        for uv in map.uv.iter().flatten() {
            let [c, r] = d.grid.to_pixel(*uv);
            assert!(c > -1e-9 && r > -1e-9 && c < n - 1.0 + 1e-9 && r < n - 1.0 + 1e-9);
        }
    }

    #[test]
    fn all_dark_drop_is_empty_output() {
        // a needle-like steep cone reflects everywhere
        let mask = DropMask::disk(31, 31, 15.0, 15.0, 12.0).unwrap();
        let hf = HeightField::from_fn(mask, |i, j| {
            let d = ((i as f64 - 15.0).powi(2) + (j as f64 - 15.0).powi(2)).sqrt();
            (12.0 - d) * 3.0
        })
        .unwrap();
        let map = ForwardMap::build(&hf, &cfg()).unwrap();
        let img = RasterGray::filled(31, 31, 0.5);
        let res = dewarp_image(&img, &hf, &cfg(), 32);
        // only the apex, where central differences see a flat top, survives
        assert!(map.valid_count() <= 1);
        assert!(matches!(res, Err(Error::EmptyOutput(_))));
    }

    #[test]
    fn ray_helpers() {
        let r = Ray::new(Vec3::new(1.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(r.hit_depth(10.0), Some(10.0));
        assert!((r.distance_squared(Vec3::new(4.0, 6.0, 3.0)) - 25.0).abs() < 1e-12);
        assert!(Ray::new(Vec3::zeros(), Vec3::zeros()).is_err());
    }
}
