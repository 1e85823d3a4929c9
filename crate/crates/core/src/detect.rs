//! Finding drops in an image.
//!
//! The camera focuses on the plate, so drops are sharp while the scene
//! behind them is blurred. Strong gradients therefore cluster on and inside
//! drops; closing and hole filling turn those clusters into solid regions.

use crate::config::DetectParams;
use crate::error::{Error, Result};
use crate::geom::{DropMask, RasterGray};

/// Sobel gradient magnitude; border pixels replicate their neighbors.
pub fn gradient_magnitude(image: &RasterGray) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let at = |i: isize, j: isize| {
        image.get(
            i.clamp(0, h as isize - 1) as usize,
            j.clamp(0, w as isize - 1) as usize,
        )
    };
    let mut out = vec![0.0; w * h];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let gx = at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i, j - 1)
                - at(i + 1, j - 1);
            let gy = at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i - 1, j)
                - at(i - 1, j + 1);
            out[i as usize * w + j as usize] = 0.125 * gx.hypot(gy);
        }
    }
    out
}

/// Nearest-rank percentile, `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * (v.len() - 1) as f64).round() as usize;
    v[rank.min(v.len() - 1)]
}

/// Pixels above `low` that are 8-connected to a pixel above `high`.
pub fn hysteresis(mag: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut out = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&k| mag[k] >= high).collect();
    for &k in &stack {
        out[k] = true;
    }
    while let Some(k) = stack.pop() {
        let (i, j) = ((k / w) as isize, (k % w) as isize);
        for di in -1..=1 {
            for dj in -1..=1 {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                    continue;
                }
                let nk = ni as usize * w + nj as usize;
                if !out[nk] && mag[nk] >= low {
                    out[nk] = true;
                    stack.push(nk);
                }
            }
        }
    }
    out
}

fn disk_offsets(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let mut v = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            if di * di + dj * dj <= r * r {
                v.push((di, dj));
            }
        }
    }
    v
}

/// Binary dilation (`grow`) or erosion with a disk. Outside the image
/// counts as unset for dilation and as set for erosion, so closing does not
/// eat into regions touching the border.
fn morph(bits: &[bool], w: usize, h: usize, r: usize, grow: bool) -> Vec<bool> {
    let offs = disk_offsets(r);
    let mut out = vec![false; w * h];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let hit = |&(di, dj): &(isize, isize)| {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                    !grow
                } else {
                    bits[ni as usize * w + nj as usize]
                }
            };
            out[i as usize * w + j as usize] = if grow {
                offs.iter().any(hit)
            } else {
                offs.iter().all(hit)
            };
        }
    }
    out
}

pub fn close(bits: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    morph(&morph(bits, w, h, r, true), w, h, r, false)
}

/// Sets every unset pixel not 4-connected to the image border.
pub fn fill_holes(bits: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for k in 0..w * h {
        let (i, j) = (k / w, k % w);
        if (i == 0 || j == 0 || i == h - 1 || j == w - 1) && !bits[k] {
            outside[k] = true;
            stack.push(k);
        }
    }
    while let Some(k) = stack.pop() {
        let (i, j) = (k / w, k % w);
        let mut visit = |nk: usize| {
            if !bits[nk] && !outside[nk] {
                outside[nk] = true;
                stack.push(nk);
            }
        };
        if i > 0 {
            visit(k - w);
        }
        if i + 1 < h {
            visit(k + w);
        }
        if j > 0 {
            visit(k - 1);
        }
        if j + 1 < w {
            visit(k + 1);
        }
    }
    outside.iter().map(|&o| !o).collect()
}

/// 4-connected components, each as a list of flat indices, in scan order of
/// their first pixel.
pub fn components(bits: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut next = 0;
        while next < comp.len() {
            let k = comp[next];
            next += 1;
            let (i, j) = (k / w, k % w);
            let mut nbrs = [None; 4];
            if i > 0 {
                nbrs[0] = Some(k - w);
            }
            if i + 1 < h {
                nbrs[1] = Some(k + w);
            }
            if j > 0 {
                nbrs[2] = Some(k - 1);
            }
            if j + 1 < w {
                nbrs[3] = Some(k + 1);
            }
            for nk in nbrs.into_iter().flatten() {
                if bits[nk] && !seen[nk] {
                    seen[nk] = true;
                    comp.push(nk);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Pixel area over the area of the convex hull of all pixel corners.
pub fn solidity(pixels: &[usize], w: usize) -> f64 {
    let mut pts: Vec<(i64, i64)> = Vec::with_capacity(pixels.len() * 4);
    for &k in pixels {
        let (y, x) = ((k / w) as i64, (k % w) as i64);
        pts.extend([(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]);
    }
    let hull = convex_hull(pts);
    let mut twice = 0i64;
    for a in 0..hull.len() {
        let (p, q) = (hull[a], hull[(a + 1) % hull.len()]);
        twice += p.0 * q.1 - q.0 * p.1;
    }
    let hull_area = twice.abs() as f64 / 2.0;
    if hull_area == 0.0 {
        return 0.0;
    }
    pixels.len() as f64 / hull_area
}

/// Monotone chain hull, counter-clockwise, without collinear points.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Drop masks found in `image`, largest first. No detections is an empty
/// list.
pub fn detect_drops(image: &RasterGray, params: &DetectParams) -> Result<Vec<DropMask>> {
    let (w, h) = (image.width(), image.height());
    if !(0.0..=100.0).contains(&params.low_percentile)
        || !(params.low_percentile..=100.0).contains(&params.high_percentile)
    {
        return Err(Error::Config(
            "percentiles must satisfy 0 ≤ low ≤ high ≤ 100".into(),
        ));
    }
    if w < 3 || h < 3 {
        return Ok(vec![]);
    }
    let mag = gradient_magnitude(image);
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if !(peak > 1e-12) {
        return Ok(vec![]);
    }
    let low = percentile(&mag, params.low_percentile).max(params.low_floor * peak);
    let high = percentile(&mag, params.high_percentile).max(params.high_floor * peak);
    log::debug!("edge thresholds {low:.4} / {high:.4} (peak {peak:.4})");
    let edges = hysteresis(&mag, w, h, low, high);
    let closed = close(&edges, w, h, params.closing_radius);
    let filled = fill_holes(&closed, w, h);
    let mut masks = Vec::new();
    for comp in components(&filled, w, h) {
        let area = comp.len() as f64;
        let diameter = (4.0 * area / std::f64::consts::PI).sqrt();
        if diameter < params.min_diameter {
            continue;
        }
        let s = solidity(&comp, w);
        if s < params.min_solidity {
            log::debug!("rejected region of diameter {diameter:.1}: solidity {s:.3}");
            continue;
        }
        let mut bits = vec![false; w * h];
        for k in comp {
            bits[k] = true;
        }
        masks.push(DropMask::new(w, h, bits)?);
    }
    masks.sort_by_key(|m| std::cmp::Reverse(m.area()));
    Ok(masks)
}
