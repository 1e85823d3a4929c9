#![allow(dead_code)]

use dropstereo::scene::{DropShape, DropSpec, PlaneSpec, SceneSpec, Texture};
use dropstereo::{DropMask, HeightField, RasterGray};

/// Spherical cap over a disk mask whose volume is `alpha · area^1.5`.
pub fn cap_field(w: usize, h: usize, cy: f64, cx: f64, radius: f64, alpha: f64) -> HeightField {
    let mask = DropMask::disk(w, h, cy, cx, radius).unwrap();
    let area = mask.area() as f64;
    let v = alpha * area.powf(1.5);
    // base radius from the pixel area, height by bisection on the cap volume
    let a = (area / std::f64::consts::PI).sqrt();
    let vol = |hc: f64| std::f64::consts::PI * hc * (3.0 * a * a + hc * hc) / 6.0;
    let (mut lo, mut hi) = (0.0, 4.0 * a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vol(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let hc = 0.5 * (lo + hi);
    let rs = (a * a + hc * hc) / (2.0 * hc);
    HeightField::from_fn(mask, |i, j| {
        let r2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
        ((rs * rs - r2).max(0.0).sqrt() - (rs - hc)).max(0.0)
    })
    .unwrap()
}

pub fn plane(depth: f64, texture: Texture) -> PlaneSpec {
    PlaneSpec {
        depth,
        texture,
        scale: 1.0,
        offset: [0.0, 0.0],
        x_range: None,
    }
}

pub fn scene(
    width: usize,
    height: usize,
    planes: Vec<PlaneSpec>,
    drops: Vec<DropSpec>,
) -> SceneSpec {
    SceneSpec {
        width,
        height,
        planes,
        blur_radius: 6.0,
        leak: 0.02,
        border: 0.5,
        drops,
    }
}

pub fn circle(cx: f64, cy: f64, radius: f64, alpha: f64) -> DropSpec {
    DropSpec {
        shape: DropShape::Circle { cx, cy, radius },
        alpha,
    }
}

/// Zero-mean normalized cross-correlation over the pixels where `valid`.
pub fn zncc(a: &[f64], b: &[f64], valid: &[bool]) -> f64 {
    let idx: Vec<usize> = (0..a.len()).filter(|&k| valid[k]).collect();
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&k| a[k]).sum::<f64>() / n;
    let mb = idx.iter().map(|&k| b[k]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &k in &idx {
        let (x, y) = (a[k] - ma, b[k] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    sab / (saa * sbb).sqrt()
}

/// Straightness of a dark, roughly vertical line: per row, the centroid of
/// darkness `max(0, 0.5 − v)` over valid pixels; then the largest deviation
/// of those centroids from their least-squares line. Rows with less than
/// `min_weight` total darkness are skipped.
pub fn line_residual(img: &RasterGray, valid: &[bool], min_weight: f64) -> Option<(f64, usize)> {
    let w = img.width();
    let mut pts = Vec::new();
    for i in 0..img.height() {
        let (mut s, mut sx) = (0.0, 0.0);
        let mut ok = true;
        for j in 0..w {
            if !valid[i * w + j] {
                continue;
            }
            let d = (0.5 - img.get(i, j)).max(0.0);
            s += d;
            sx += d * j as f64;
            // a dark run touching an invalid pixel may be cut off
            if d > 0.0 && ((j > 0 && !valid[i * w + j - 1]) || (j + 1 < w && !valid[i * w + j + 1]))
            {
                ok = false;
            }
        }
        if ok && s >= min_weight {
            pts.push((i as f64, sx / s));
        }
    }
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let syy: f64 = pts.iter().map(|p| (p.0 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum();
    let slope = sxy / syy;
    let res = pts
        .iter()
        .map(|p| (p.1 - (mx + slope * (p.0 - my))).abs())
        .fold(0.0, f64::max);
    Some((res, pts.len()))
}

/// PGM texture with one dark vertical line of `width` at column `x0`.
pub fn write_line_texture(path: &std::path::Path, size: usize, x0: usize, width: usize) {
    let img = RasterGray::from_fn(size, size, |_, j| {
        if j >= x0 && j < x0 + width {
            0.1
        } else {
            0.9
        }
    });
    dropstereo::formats::write_pgm(path, &img).unwrap();
}
