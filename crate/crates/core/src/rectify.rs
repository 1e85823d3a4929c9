//! Perspective-correct views through drops, and brightness compensation.
//!
//! A drop pixel's outbound ray meets a depth plane at some scene point; the
//! pinhole projection of that point onto the plate is where it would have
//! appeared without the drop. Rectification resamples the drop image onto
//! those positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::formats::FloatMap;
use crate::geom::{HeightField, RasterGray};
use crate::raytrace::{rasterize_mesh, DropOptics, ForwardMap};
use crate::stereo::DepthResult;

/// Largest side of a rectified raster.
pub const MAX_RECTIFIED_SIDE: usize = 1024;

/// A drop image divided by its transmittance.
#[derive(Clone, Debug, PartialEq)]
pub struct Compensated {
    pub image: RasterGray,
    /// False on totally reflected drop pixels, whose values are left as is.
    pub valid: Vec<bool>,
    /// Transmittance divided out per pixel; 1 outside the drop.
    pub transmittance: Vec<f64>,
}

/// Divides every transmitting drop pixel by the transmittance of both
/// interfaces and clamps to `[0, 1]`. Pixels outside the mask are copied.
pub fn compensate_illuminance(
    image: &RasterGray,
    hf: &HeightField,
    config: &OpticalConfig,
) -> Result<Compensated> {
    let (w, h) = (image.width(), image.height());
    if hf.width() != w || hf.height() != h {
        return Err(Error::domain("image and drop grids differ"));
    }
    let optics = DropOptics::new(hf, config)?;
    let mut out = image.data().to_vec();
    let mut valid = vec![true; w * h];
    let mut trans = vec![1.0; w * h];
    let pixels: Vec<(usize, usize)> = hf.mask().pixels().collect();
    let traced: Vec<Option<f64>> = pixels
        .par_iter()
        .map(|&(i, j)| optics.trace_pixel(i, j).map(|t| t.transmittance()))
        .collect();
    for (&(i, j), t) in pixels.iter().zip(traced) {
        let k = i * w + j;
        match t {
            Some(t) if t > 0.0 => {
                out[k] = (out[k] / t).clamp(0.0, 1.0);
                trans[k] = t;
            }
            _ => {
                valid[k] = false;
                trans[k] = 0.0;
            }
        }
    }
    Ok(Compensated {
        image: RasterGray::from_vec(w, h, out)?,
        valid,
        transmittance: trans,
    })
}

/// Where the rectifying plane comes from.
#[derive(Clone, Copy, Debug)]
pub enum DepthSource<'a> {
    Plane(f64),
    /// Median depth of the valid triangulated points.
    Triangulated(&'a DepthResult),
    /// Experimental: per-pixel depth where the map is finite, its median
    /// elsewhere.
    PerPixel(&'a FloatMap),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifiedInfo {
    /// Plane depth used, or the fallback depth in per-pixel mode.
    pub depth: f64,
    pub per_pixel: bool,
    /// Plate position of rectified pixel `(0, 0)`.
    pub origin: [f64; 2],
    /// Rectified pixels per plate pixel.
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    pub valid_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RectifiedView {
    pub image: RasterGray,
    pub valid: Vec<bool>,
    /// Transmittance that was divided out, per rectified pixel.
    pub transmittance: Vec<f64>,
    pub info: RectifiedInfo,
}

impl RectifiedView {
    /// Plate position of rectified pixel `(row, col)`.
    pub fn plate_position(&self, row: f64, col: f64) -> [f64; 2] {
        [
            self.info.origin[0] + col / self.info.scale,
            self.info.origin[1] + row / self.info.scale,
        ]
    }
}

/// Resamples one drop into a perspective-correct view at the drop's native
/// resolution: one rectified pixel per drop pixel at the median local
/// magnification, capped at [`MAX_RECTIFIED_SIDE`].
pub fn rectify_drop(
    image: &RasterGray,
    hf: &HeightField,
    config: &OpticalConfig,
    depth: DepthSource,
) -> Result<RectifiedView> {
    rectify_drop_with_scale(image, hf, config, depth, None)
}

/// As [`rectify_drop`] with an explicit scale in rectified pixels per plate
/// pixel; `None` picks the native scale.
pub fn rectify_drop_with_scale(
    image: &RasterGray,
    hf: &HeightField,
    config: &OpticalConfig,
    depth: DepthSource,
    scale: Option<f64>,
) -> Result<RectifiedView> {
    if let Some(s) = scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!(
                "rectified scale must be positive, got {s}"
            )));
        }
    }
    let (w, h) = (image.width(), image.height());
    if hf.width() != w || hf.height() != h {
        return Err(Error::domain("image and drop grids differ"));
    }
    let (plane, per_pixel) = match depth {
        DepthSource::Plane(d) => (d, None),
        DepthSource::Triangulated(r) => (
            r.median_depth()
                .ok_or_else(|| Error::EmptyOutput("no valid triangulated points".into()))?,
            None,
        ),
        DepthSource::PerPixel(m) => {
            if m.width != w || m.height != h {
                return Err(Error::domain("depth map and image grids differ"));
            }
            let finite = m
                .data
                .iter()
                .filter(|v| v.is_finite())
                .map(|&v| v as f64)
                .collect();
            let d = crate::stereo::median(finite)
                .ok_or_else(|| Error::EmptyOutput("depth map has no finite values".into()))?;
            (d, Some(m))
        }
    };
    if !(plane > hf.max_height()) {
        return Err(Error::domain(format!(
            "depth {plane} must lie behind the drop"
        )));
    }
    let comp = compensate_illuminance(image, hf, config)?;
    let optics = DropOptics::new(hf, config)?;
    let cam = *optics.camera();
    let uv: Vec<Option<[f64; 2]>> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let t = optics.trace_pixel(k / w, k % w)?;
            let d = per_pixel
                .map(|m| m.data[k] as f64)
                .filter(|d| d.is_finite() && *d > hf.max_height())
                .unwrap_or(plane);
            let s = t.ray.hit_depth(d)?;
            cam.project_to_plate(t.ray.at(s))
        })
        .collect();
    let map = ForwardMap {
        width: w,
        height: h,
        uv,
    };
    let ext = map
        .extent()
        .filter(|e| e[2] > e[0] && e[3] > e[1])
        .ok_or_else(|| Error::EmptyOutput("no drop pixel reaches the depth plane".into()))?;
    let span = (ext[2] - ext[0]).max(ext[3] - ext[1]);
    let scale = scale
        .or_else(|| map.median_magnification().map(f64::recip))
        .ok_or_else(|| Error::EmptyOutput("no complete pixel quad reaches the depth plane".into()))?
        .min((MAX_RECTIFIED_SIDE - 1) as f64 / span);
    let origin = [ext[0], ext[1]];
    let out_w = ((ext[2] - ext[0]) * scale).floor() as usize + 1;
    let out_h = ((ext[3] - ext[1]) * scale).floor() as usize + 1;
    let (source, valid) = rasterize_mesh(
        &map,
        |p| [(p[0] - origin[0]) * scale, (p[1] - origin[1]) * scale],
        out_w,
        out_h,
    );
    // Linear interpolation inside mesh triangles is only a first guess; near
    // the band the map bends sharply within one pixel, so refine each source
    // position against the traced surface.
    let forward = |x: f64, y: f64| -> Option<[f64; 2]> {
        let t = optics.trace(x, y).ok()??;
        let d = per_pixel
            .map(|m| {
                m.data[(y.round() as usize).min(h - 1) * w + (x.round() as usize).min(w - 1)] as f64
            })
            .filter(|d| d.is_finite() && *d > hf.max_height())
            .unwrap_or(plane);
        let p = cam.project_to_plate(t.ray.at(t.ray.hit_depth(d)?))?;
        Some([(p[0] - origin[0]) * scale, (p[1] - origin[1]) * scale])
    };
    let source: Vec<[f64; 2]> = source
        .par_iter()
        .enumerate()
        .map(|(k, &s0)| {
            if !valid[k] {
                return s0;
            }
            refine_source(&forward, s0, [(k % out_w) as f64, (k / out_w) as f64])
        })
        .collect();
    // only transmitting drop pixels may contribute to a sample
    let usable: Vec<bool> = (0..w * h)
        .map(|k| hf.mask().bits()[k] && comp.valid[k])
        .collect();
    let samples: Vec<Option<(f64, f64)>> = (0..out_w * out_h)
        .into_par_iter()
        .map(|k| {
            if !valid[k] {
                return None;
            }
            let [x, y] = source[k];
            Some((
                bilinear_masked(&comp.image, &usable, x, y)?,
                bilinear_masked_slice(&comp.transmittance, w, h, &usable, x, y)?,
            ))
        })
        .collect();
    let valid: Vec<bool> = samples.iter().map(Option::is_some).collect();
    let n_valid = valid.iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return Err(Error::EmptyOutput("rectified view covers no pixels".into()));
    }
    let data = samples.iter().map(|s| s.map_or(0.0, |s| s.0)).collect();
    let transmittance = samples.iter().map(|s| s.map_or(0.0, |s| s.1)).collect();
    Ok(RectifiedView {
        image: RasterGray::from_vec(out_w, out_h, data)?,
        valid,
        transmittance,
        info: RectifiedInfo {
            depth: plane,
            per_pixel: per_pixel.is_some(),
            origin,
            scale,
            width: out_w,
            height: out_h,
            valid_fraction: n_valid as f64 / (out_w * out_h) as f64,
        },
    })
}

fn bilinear_masked(img: &RasterGray, usable: &[bool], x: f64, y: f64) -> Option<f64> {
    bilinear_masked_slice(img.data(), img.width(), img.height(), usable, x, y)
}

/// Bilinear interpolation renormalized over the usable corners.
fn bilinear_masked_slice(
    data: &[f64],
    w: usize,
    h: usize,
    usable: &[bool],
    x: f64,
    y: f64,
) -> Option<f64> {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (mut acc, mut wsum) = (0.0, 0.0);
    for (dy, dx, wt) in [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
        (0.0, 1.0, fx * (1.0 - fy)),
        (1.0, 0.0, (1.0 - fx) * fy),
        (1.0, 1.0, fx * fy),
    ] {
        let (i, j) = (y0 + dy, x0 + dx);
        if wt <= 0.0 || i < 0.0 || j < 0.0 || i >= h as f64 || j >= w as f64 {
            continue;
        }
        let k = i as usize * w + j as usize;
        if usable[k] {
            acc += wt * data[k];
            wsum += wt;
        }
    }
    (wsum > 1e-9).then(|| acc / wsum)
}

/// Gauss-Newton on `forward(src) = target` from `start`, with a
/// finite-difference Jacobian. Keeps the best point seen, so it never does
/// worse than the start.
fn refine_source(
    forward: &impl Fn(f64, f64) -> Option<[f64; 2]>,
    start: [f64; 2],
    target: [f64; 2],
) -> [f64; 2] {
    const STEP: f64 = 1e-3;
    let err = |p: [f64; 2]| forward(p[0], p[1]).map(|f| [f[0] - target[0], f[1] - target[1]]);
    let Some(mut e) = err(start) else {
        return start;
    };
    let mut best = (start, e[0].hypot(e[1]));
    let mut p = start;
    for _ in 0..4 {
        if best.1 < 1e-3 {
            break;
        }
        let (Some(fx), Some(fy)) = (err([p[0] + STEP, p[1]]), err([p[0], p[1] + STEP])) else {
            break;
        };
        let j = [
            [(fx[0] - e[0]) / STEP, (fy[0] - e[0]) / STEP],
            [(fx[1] - e[1]) / STEP, (fy[1] - e[1]) / STEP],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-12 {
            break;
        }
        let dx = (j[1][1] * e[0] - j[0][1] * e[1]) / det;
        let dy = (j[0][0] * e[1] - j[1][0] * e[0]) / det;
        // a source step of more than a pixel means the linear guess was
        // already as good as this model allows
        if dx.hypot(dy) > 1.0 {
            break;
        }
        p = [p[0] - dx, p[1] - dy];
        let Some(next) = err(p) else {
            break;
        };
        e = next;
        let n = e[0].hypot(e[1]);
        if n < best.1 {
            best = (p, n);
        }
    }
    best.0
}
