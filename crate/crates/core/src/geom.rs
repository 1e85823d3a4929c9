//! Raster and height-field primitives shared by every stage.
//!
//! Geometry lives in pixel units on a single grid: column `j` is the `x`
//! axis, row `i` is the `y` axis, and `z` grows from the glass plate
//! (`z = 0`) toward the scene. Heights are stored on the full image grid with
//! zero outside the drop mask so that every stage can index by `(i, j)`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Returns `v / |v|`, or `None` for a zero or non-finite vector.
pub fn normalize(v: Vec3) -> Option<Vec3> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        Some(v / n)
    } else {
        None
    }
}

/// Grayscale raster with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterGray {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds a raster from row-major samples, clamping into `[0, 1]`.
    /// Non-finite samples become 0.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("raster dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "raster {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        let data = data
            .into_iter()
            .map(|v| {
                if v.is_finite() {
                    v.clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                let v = f(i, j);
                data.push(if v.is_finite() {
                    v.clamp(0.0, 1.0)
                } else {
                    0.0
                });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = if v.is_finite() {
            v.clamp(0.0, 1.0)
        } else {
            0.0
        };
    }

    /// Bilinear sample at continuous `(x, y)` = (column, row); clamps to the
    /// raster edge.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        bilinear_clamped(&self.data, self.width, self.height, x, y)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
        .expect("same dimensions")
    }
}

pub(crate) fn bilinear_clamped(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let j0 = x.floor() as usize;
    let i0 = y.floor() as usize;
    let j1 = (j0 + 1).min(width - 1);
    let i1 = (i0 + 1).min(height - 1);
    let fx = x - j0 as f64;
    let fy = y - i0 as f64;
    let a = data[i0 * width + j0] * (1.0 - fx) + data[i0 * width + j1] * fx;
    let b = data[i1 * width + j0] * (1.0 - fx) + data[i1 * width + j1] * fx;
    a * (1.0 - fy) + b * fy
}

/// The drop's adhesion region on the image grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    area: usize,
}

const NEIGHBORS4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

impl DropMask {
    /// Builds a mask; a non-empty mask must be a single 4-connected component.
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("mask dimensions must be positive"));
        }
        if bits.len() != width * height {
            return Err(Error::domain("mask bit count does not match dimensions"));
        }
        let area = bits.iter().filter(|&&b| b).count();
        let mask = Self {
            width,
            height,
            bits,
            area,
        };
        if area > 0 && mask.component_size_from(mask.first_pixel().unwrap()) != area {
            return Err(Error::domain("mask is not 4-connected"));
        }
        Ok(mask)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            area: 0,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                bits.push(f(i, j));
            }
        }
        Self::new(width, height, bits)
    }

    /// Pixels whose centers lie within `radius` of `(cy, cx)`.
    pub fn disk(width: usize, height: usize, cy: f64, cx: f64, radius: f64) -> Result<Self> {
        Self::from_fn(width, height, |i, j| {
            let dy = i as f64 - cy;
            let dx = j as f64 - cx;
            dx * dx + dy * dy <= radius * radius
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of member pixels, `B`.
    pub fn area(&self) -> usize {
        self.area
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.height && j < self.width && self.bits[i * self.width + j]
    }

    #[inline]
    pub fn contains_signed(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && self.contains(i as usize, j as usize)
    }

    /// Member pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / w, k % w))
    }

    /// A member pixel with a 4-neighbor outside the mask (or off the grid).
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        self.contains(i, j)
            && NEIGHBORS4
                .iter()
                .any(|&(di, dj)| !self.contains_signed(i as isize + di, j as isize + dj))
    }

    /// Bounding box `(i_min, j_min, i_max, j_max)`, inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (i, j) in self.pixels() {
            bb = Some(match bb {
                None => (i, j, i, j),
                Some((a, b, c, d)) => (a.min(i), b.min(j), c.max(i), d.max(j)),
            });
        }
        bb
    }

    /// Diameter of the disk with the same area.
    pub fn equivalent_diameter(&self) -> f64 {
        2.0 * (self.area as f64 / std::f64::consts::PI).sqrt()
    }

    /// Mask shifted by `(di, dj)`; pixels leaving the grid are dropped.
    pub fn shifted(&self, di: isize, dj: isize) -> Result<Self> {
        Self::from_fn(self.width, self.height, |i, j| {
            self.contains_signed(i as isize - di, j as isize - dj)
        })
    }

    pub fn intersection_over_union(&self, other: &DropMask) -> f64 {
        let mut inter = 0usize;
        let mut uni = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            uni += (*a || *b) as usize;
        }
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    fn first_pixel(&self) -> Option<(usize, usize)> {
        self.pixels().next()
    }

    fn component_size_from(&self, start: (usize, usize)) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.0 * self.width + start.1] = true;
        let mut count = 0;
        while let Some((i, j)) = queue.pop_front() {
            count += 1;
            for (di, dj) in NEIGHBORS4 {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if self.contains_signed(ni, nj) {
                    let k = ni as usize * self.width + nj as usize;
                    if !seen[k] {
                        seen[k] = true;
                        queue.push_back((ni as usize, nj as usize));
                    }
                }
            }
        }
        count
    }
}

/// Unconstrained set of pixels (dark bands, validity flags).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelSet {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.bits[i * self.width + j] = true;
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.height && j < self.width && self.bits[i * self.width + j]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / w, k % w))
    }
}

/// Drop surface `z(i, j)` over a mask. Heights are zero outside the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    mask: DropMask,
    z: Vec<f64>,
}

impl HeightField {
    /// `z` is given on the full grid; values outside the mask are ignored
    /// and stored as zero.
    pub fn new(mask: DropMask, mut z: Vec<f64>) -> Result<Self> {
        if z.len() != mask.width * mask.height {
            return Err(Error::domain("height samples do not match mask grid"));
        }
        for (k, v) in z.iter_mut().enumerate() {
            if !mask.bits[k] {
                *v = 0.0;
            } else if !v.is_finite() || *v < 0.0 {
                return Err(Error::domain(format!(
                    "height at pixel {} is {v}; heights must be finite and non-negative",
                    k
                )));
            }
        }
        Ok(Self { mask, z })
    }

    pub fn constant(mask: DropMask, value: f64) -> Result<Self> {
        let z = mask
            .bits
            .iter()
            .map(|&b| if b { value } else { 0.0 })
            .collect();
        Self::new(mask, z)
    }

    pub fn from_fn(mask: DropMask, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let w = mask.width;
        let z = (0..mask.bits.len())
            .map(|k| if mask.bits[k] { f(k / w, k % w) } else { 0.0 })
            .collect();
        Self::new(mask, z)
    }

    /// Zero-height field, the flat-drop test mode.
    pub fn flat(mask: DropMask) -> Self {
        let z = vec![0.0; mask.bits.len()];
        Self { mask, z }
    }

    pub fn mask(&self) -> &DropMask {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn heights(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.mask.width + j]
    }

    pub fn max_height(&self) -> f64 {
        self.z.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_parts(self) -> (DropMask, Vec<f64>) {
        (self.mask, self.z)
    }

    /// Bilinear height at continuous `(x, y)`; samples outside the mask
    /// count as zero.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        bilinear_clamped(&self.z, self.mask.width, self.mask.height, x, y)
    }
}

/// Per-pixel `(∂z/∂x, ∂z/∂y)` over a mask; zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub width: usize,
    pub height: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[inline]
fn diff_along(mask: &DropMask, values: &[f64], i: usize, j: usize, di: isize, dj: isize) -> f64 {
    let w = mask.width;
    let (ii, jj) = (i as isize, j as isize);
    let fwd = mask.contains_signed(ii + di, jj + dj);
    let bwd = mask.contains_signed(ii - di, jj - dj);
    let at = |a: isize, b: isize| values[a as usize * w + b as usize];
    match (fwd, bwd) {
        (true, true) => 0.5 * (at(ii + di, jj + dj) - at(ii - di, jj - dj)),
        (true, false) => at(ii + di, jj + dj) - at(ii, jj),
        (false, true) => at(ii, jj) - at(ii - di, jj - dj),
        (false, false) => 0.0,
    }
}

fn gradient_of(mask: &DropMask, values: &[f64]) -> VectorField {
    let (w, h) = (mask.width, mask.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for (i, j) in mask.pixels() {
        gx[i * w + j] = diff_along(mask, values, i, j, 0, 1);
        gy[i * w + j] = diff_along(mask, values, i, j, 1, 0);
    }
    VectorField {
        width: w,
        height: h,
        x: gx,
        y: gy,
    }
}

/// Central differences inside the mask, one-sided where a neighbor is
/// missing.
pub fn gradient(hf: &HeightField) -> VectorField {
    gradient_of(&hf.mask, &hf.z)
}

/// Divergence of a vector field over a mask, same stencil as [`gradient`].
pub fn divergence(field: &VectorField, mask: &DropMask) -> Result<Vec<f64>> {
    if field.width != mask.width || field.height != mask.height {
        return Err(Error::domain("field and mask grids differ"));
    }
    let w = mask.width;
    let mut out = vec![0.0; field.x.len()];
    for (i, j) in mask.pixels() {
        out[i * w + j] =
            diff_along(mask, &field.x, i, j, 0, 1) + diff_along(mask, &field.y, i, j, 1, 0);
    }
    Ok(out)
}

#[inline]
fn normal_from_gradient(gx: f64, gy: f64) -> Vec3 {
    let n = Vec3::new(-gx, -gy, 1.0);
    n / n.norm()
}

/// Unit outward normal at a mask pixel, always in the `+z` hemisphere.
pub fn surface_normal(hf: &HeightField, i: usize, j: usize) -> Result<Vec3> {
    if !hf.mask.contains(i, j) {
        return Err(Error::domain(format!(
            "pixel ({i}, {j}) is outside the mask"
        )));
    }
    let gx = diff_along(&hf.mask, &hf.z, i, j, 0, 1);
    let gy = diff_along(&hf.mask, &hf.z, i, j, 1, 0);
    Ok(normal_from_gradient(gx, gy))
}

/// Normals for the whole grid; `(0, 0, 1)` outside the mask.
pub fn normal_map(hf: &HeightField) -> Vec<Vec3> {
    let g = gradient(hf);
    g.x.iter()
        .zip(&g.y)
        .map(|(&gx, &gy)| normal_from_gradient(gx, gy))
        .collect()
}

/// Height-weighted centroid `(x_g, y_g)`, normalized by the area `B`
/// rather than by the volume.
pub fn mask_centroid(hf: &HeightField) -> Result<(f64, f64)> {
    let b = hf.mask.area;
    if b == 0 {
        return Err(Error::domain("centroid of an empty mask"));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, j) in hf.mask.pixels() {
        let z = hf.get(i, j);
        sx += z * j as f64;
        sy += z * i as f64;
    }
    Ok((sx / b as f64, sy / b as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(n: usize, side: usize) -> DropMask {
        DropMask::from_fn(n, n, |i, j| i < side && j < side).unwrap()
    }

    #[test]
    fn flat_field_normal_is_up() {
        let hf =
            HeightField::constant(DropMask::disk(32, 32, 16.0, 16.0, 10.0).unwrap(), 2.5).unwrap();
        for (i, j) in hf.mask().pixels() {
            let n = surface_normal(&hf, i, j).unwrap();
            assert!((n - Vec3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn plane_normal_z() {
        let mask = square(12, 12);
        let hf = HeightField::from_fn(mask, |_, j| j as f64).unwrap();
        let n = surface_normal(&hf, 5, 5).unwrap();
        assert!((n.z - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        // one-sided at the edge keeps the slope exact
        let n = surface_normal(&hf, 5, 11).unwrap();
        assert!((n.z - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(n.x < 0.0, "normal tilts away from the rising side");
    }

    #[test]
    fn hemisphere_normals_match_sphere() {
        let r = 60.0;
        let c = 64.0;
        let mask = DropMask::disk(129, 129, c, c, r - 1.0).unwrap();
        let hf = HeightField::from_fn(mask, |i, j| {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            (r * r - d2).max(0.0).sqrt()
        })
        .unwrap();
        for (i, j) in hf.mask().pixels() {
            let rad = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt();
            if rad > 0.8 * r || hf.mask().is_boundary(i, j) {
                continue;
            }
            let analytic = (1.0 - rad * rad / (r * r)).sqrt();
            let n = surface_normal(&hf, i, j).unwrap();
            assert!(
                (n.z - analytic).abs() < 2e-2,
                "({i},{j}) {} vs {analytic}",
                n.z
            );
        }
    }

    #[test]
    fn normal_outside_mask_is_error() {
        let hf = HeightField::flat(square(8, 4));
        assert!(matches!(surface_normal(&hf, 6, 6), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_of_constant_and_plane() {
        let mask = square(10, 10);
        let hf = HeightField::constant(mask.clone(), 3.0).unwrap();
        let g = gradient(&hf);
        assert!(g.x.iter().chain(&g.y).all(|&v| v == 0.0));
        assert!(divergence(&g, &mask).unwrap().iter().all(|&v| v == 0.0));

        let hf = HeightField::from_fn(mask, |_, j| j as f64).unwrap();
        let g = gradient(&hf);
        for i in 1..9 {
            for j in 1..9 {
                assert_eq!((g.x[i * 10 + j], g.y[i * 10 + j]), (1.0, 0.0));
            }
        }
    }

    #[test]
    fn laplacian_of_bowl_is_two() {
        let n = 24;
        let mask = square(n, n);
        let hf = HeightField::from_fn(mask.clone(), |i, j| {
            let (x, y) = (j as f64, i as f64);
            (x * x + y * y) / 2.0
        })
        .unwrap();
        let lap = divergence(&gradient(&hf), &mask).unwrap();
        for i in 2..n - 2 {
            for j in 2..n - 2 {
                assert!((lap[i * n + j] - 2.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn centroid_examples() {
        let mask = square(10, 10);
        let hf = HeightField::constant(mask.clone(), 1.0).unwrap();
        assert_eq!(mask_centroid(&hf).unwrap().0, 4.5);
        let hf = HeightField::constant(mask, 2.0).unwrap();
        assert_eq!(mask_centroid(&hf).unwrap().0, 9.0);
        assert!(mask_centroid(&HeightField::flat(DropMask::empty(4, 4))).is_err());
    }

    #[test]
    fn centroid_of_dome_matches_direct_sum() {
        let mask = DropMask::disk(40, 40, 18.0, 21.0, 12.0).unwrap();
        let hf = HeightField::from_fn(mask.clone(), |i, j| {
            let d2 = (i as f64 - 18.0).powi(2) + (j as f64 - 21.0).powi(2);
            (144.0 - d2).max(0.0).sqrt()
        })
        .unwrap();
        let (mut sx, mut sy, mut b) = (0.0, 0.0, 0.0);
        for i in 0..40 {
            for j in 0..40 {
                if mask.contains(i, j) {
                    let z = hf.heights()[i * 40 + j];
                    sx += z * j as f64;
                    sy += z * i as f64;
                    b += 1.0;
                }
            }
        }
        let (xg, yg) = mask_centroid(&hf).unwrap();
        assert!((xg - sx / b).abs() < 1e-12 && (yg - sy / b).abs() < 1e-12);
    }

    #[test]
    fn disconnected_mask_rejected() {
        let r = DropMask::from_fn(6, 6, |i, j| (i < 2 && j < 2) || (i > 3 && j > 3));
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn normals_are_unit(seed in 0u64..1000, amp in 0.0f64..50.0) {
            let mask = DropMask::disk(24, 24, 12.0, 12.0, 9.0).unwrap();
            let hf = HeightField::from_fn(mask, |i, j| {
                let t = (i * 31 + j * 17) as f64 + seed as f64;
                amp * (0.5 + 0.5 * (t * 0.37).sin())
            }).unwrap();
            for (i, j) in hf.mask().pixels() {
                let n = surface_normal(&hf, i, j).unwrap();
                prop_assert!((n.norm() - 1.0).abs() < 1e-9);
                prop_assert!(n.z > 0.0);
            }
        }

        #[test]
        fn laplacian_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0u64..100) {
            let mask = DropMask::disk(20, 20, 10.0, 10.0, 8.0).unwrap();
            let f1 = |i: usize, j: usize| ((i * 7 + j * 3) as f64 + s as f64).sin().abs();
            let f2 = |i: usize, j: usize| ((i * j) as f64 * 0.1).cos().abs();
            let z1 = HeightField::from_fn(mask.clone(), f1).unwrap();
            let z2 = HeightField::from_fn(mask.clone(), f2).unwrap();
            let l1 = divergence(&gradient(&z1), &mask).unwrap();
            let l2 = divergence(&gradient(&z2), &mask).unwrap();
            // linear combination through the raw operator (heights may go negative)
            let comb: Vec<f64> = z1.heights().iter().zip(z2.heights()).map(|(x, y)| a * x + b * y).collect();
            let lc = divergence(&gradient_of(&mask, &comb), &mask).unwrap();
            for k in 0..lc.len() {
                prop_assert!((lc[k] - (a * l1[k] + b * l2[k])).abs() < 1e-9);
            }
        }

        #[test]
        fn centroid_translation_covariant(di in 0isize..6, dj in 0isize..6) {
            let mask = DropMask::disk(40, 40, 14.0, 14.0, 7.0).unwrap();
            let hf = HeightField::constant(mask.clone(), 1.5).unwrap();
            let moved = HeightField::constant(mask.shifted(di, dj).unwrap(), 1.5).unwrap();
            let (x0, y0) = mask_centroid(&hf).unwrap();
            let (x1, y1) = mask_centroid(&moved).unwrap();
            prop_assert!((x1 - x0 - 1.5 * dj as f64).abs() < 1e-9);
            prop_assert!((y1 - y0 - 1.5 * di as f64).abs() < 1e-9);
        }
    }
}
