//! Correspondences between drops and ray triangulation.
//!
//! Drops are dewarped onto one shared angular grid so a scene point at
//! infinity lands on the same output pixel in every drop; finite depth shows
//! up as parallax. Matches found there are mapped back to plate positions,
//! retraced through each drop, and triangulated.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::config::{BlockMatchParams, OpticalConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::formats::FloatMap;
use crate::geom::{HeightField, RasterGray, Vec3};
use crate::raytrace::{dewarp_on_grid, AngularGrid, Dewarped, DropOptics, ForwardMap, Ray};

/// Condition number above which the normal matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// A matched pair of warped-image positions on two drops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub drop_a: usize,
    /// Sub-pixel `(i, j)` on drop `a`.
    pub pixel_a: [f64; 2],
    pub drop_b: usize,
    pub pixel_b: [f64; 2],
    pub score: f64,
}

/// Point closest to all rays in the least-squares sense, and the sum of
/// squared distances from it to each ray.
pub fn triangulate(rays: &[Ray]) -> Result<(Vec3, f64)> {
    if rays.len() < 2 {
        return Err(Error::domain(format!(
            "triangulation needs at least two rays, got {}",
            rays.len()
        )));
    }
    // solve about the mean origin, then refine with the perpendicular
    // offsets, which stay small and exact near the solution
    let center = rays.iter().fold(Vec3::zeros(), |acc, r| acc + r.origin) / rays.len() as f64;
    let mut a = Matrix3::zeros();
    for r in rays {
        a += Matrix3::identity() - r.direction * r.direction.transpose();
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DegenerateGeometry { cond });
    }
    let lu = a.lu();
    let offsets = |p: Vec3| {
        rays.iter().fold(Vec3::zeros(), |acc, r| {
            let w = r.origin - p;
            acc + (w - r.direction * r.direction.dot(&w))
        })
    };
    let mut p = center;
    for _ in 0..3 {
        let step = lu.solve(&offsets(p)).ok_or(Error::DegenerateGeometry {
            cond: f64::INFINITY,
        })?;
        p += step;
    }
    let residual = rays.iter().map(|r| r.distance_squared(p)).sum();
    Ok((p, residual))
}

/// Per-pixel window statistics: zero-mean window values are never stored,
/// only the mean and the centered norm, `None` where the window leaves the
/// valid region.
struct WindowStats {
    n: usize,
    half: usize,
    stats: Vec<Option<(f64, f64)>>,
}

impl WindowStats {
    fn new(img: &RasterGray, valid: &[bool], window: usize) -> Self {
        let n = img.width();
        let half = window / 2;
        let count = (window * window) as f64;
        let stats = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (r, c) = (k / n, k % n);
                if r < half || c < half || r + half >= n || c + half >= n {
                    return None;
                }
                let (mut s, mut s2) = (0.0, 0.0);
                for rr in r - half..=r + half {
                    for cc in c - half..=c + half {
                        if !valid[rr * n + cc] {
                            return None;
                        }
                        let v = img.get(rr, cc);
                        s += v;
                        s2 += v * v;
                    }
                }
                let mean = s / count;
                Some((mean, (s2 - s * mean).max(0.0).sqrt()))
            })
            .collect();
        Self { n, half, stats }
    }

    fn get(&self, r: isize, c: isize) -> Option<(f64, f64)> {
        let n = self.n as isize;
        if r < 0 || c < 0 || r >= n || c >= n {
            return None;
        }
        self.stats[(r * n + c) as usize]
    }
}

/// One pyramid level of one image.
struct Level {
    img: RasterGray,
    stats: WindowStats,
}

impl Level {
    /// Centered template at `(r, c)` scaled to unit norm.
    fn template(&self, r: isize, c: isize, min_sd: f64) -> Option<Vec<f64>> {
        let (mean, norm) = self.stats.get(r, c)?;
        let h = self.stats.half;
        let count = ((2 * h + 1) * (2 * h + 1)) as f64;
        if !(norm > 0.0) || norm / count.sqrt() < min_sd {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        let mut t = Vec::with_capacity((2 * h + 1).pow(2));
        for rr in r - h..=r + h {
            for cc in c - h..=c + h {
                t.push((self.img.get(rr, cc) - mean) / norm);
            }
        }
        Some(t)
    }

    /// ZNCC of a unit template against the window at `(r, c)`.
    fn score(&self, t: &[f64], r: isize, c: isize) -> Option<f64> {
        let (_, norm) = self.stats.get(r, c)?;
        if norm <= 0.0 {
            return None;
        }
        let h = self.stats.half;
        let (r, c) = (r as usize, c as usize);
        let mut acc = 0.0;
        let mut k = 0;
        for rr in r - h..=r + h {
            let row = &self.img.data()[rr * self.stats.n..];
            for &v in &row[c - h..=c + h] {
                acc += t[k] * v;
                k += 1;
            }
        }
        Some(acc / norm)
    }

    /// Best-scoring window within `radius` of `(r, c)`. Ties keep the first
    /// offset in row-major scan order.
    fn best(&self, t: &[f64], r: isize, c: isize, radius: isize) -> Option<(isize, isize, f64)> {
        let mut best: Option<(isize, isize, f64)> = None;
        for rr in r - radius..=r + radius {
            for cc in c - radius..=c + radius {
                if let Some(s) = self.score(t, rr, cc) {
                    if best.is_none_or(|b| s > b.2) {
                        best = Some((rr, cc, s));
                    }
                }
            }
        }
        best
    }
}

/// Radius of the refinement search on every level below the coarsest.
const REFINE_RADIUS: isize = 2;

struct Pyramid(Vec<Level>);

impl Pyramid {
    fn new(img: &RasterGray, valid: &[bool], window: usize, levels: usize) -> Self {
        let mut out = Vec::with_capacity(levels);
        let (mut img, mut valid) = (img.clone(), valid.to_vec());
        for l in 0..levels {
            if l > 0 {
                (img, valid) = halve(&img, &valid);
            }
            let stats = WindowStats::new(&img, &valid, window);
            out.push(Level {
                img: img.clone(),
                stats,
            });
        }
        Self(out)
    }

    /// Follows the template at full-resolution `(r, c)` of `self` into
    /// `other`, coarse to fine. Returns the integer position and score on
    /// the finest level.
    fn track(
        &self,
        other: &Pyramid,
        r: isize,
        c: isize,
        radius: isize,
        min_sd: f64,
    ) -> Option<(isize, isize, f64)> {
        let top = self.0.len() - 1;
        let mut guess: Option<(isize, isize)> = None;
        for l in (0..=top).rev() {
            let (lr, lc) = (r >> l, c >> l);
            let t = self.0[l].template(lr, lc, if l == 0 { min_sd } else { 0.0 })?;
            let (gr, gc, rad) = match guess {
                None => (lr, lc, radius),
                Some((gr, gc)) => (
                    2 * gr + (lr - 2 * (lr >> 1)),
                    2 * gc + (lc - 2 * (lc >> 1)),
                    REFINE_RADIUS,
                ),
            };
            let (br, bc, s) = other.0[l].best(&t, gr, gc, rad)?;
            if l == 0 {
                return Some((br, bc, s));
            }
            guess = Some((br, bc));
        }
        None
    }
}

/// 2×2 box downsampling; an output pixel is valid when all four inputs are.
fn halve(img: &RasterGray, valid: &[bool]) -> (RasterGray, Vec<bool>) {
    let n = img.width();
    let m = n / 2;
    let mut ok = vec![false; m * m];
    let out = RasterGray::from_fn(m, m, |r, c| {
        let ks = [
            (2 * r) * n + 2 * c,
            (2 * r) * n + 2 * c + 1,
            (2 * r + 1) * n + 2 * c,
            (2 * r + 1) * n + 2 * c + 1,
        ];
        ok[r * m + c] = ks.iter().all(|&k| valid[k]);
        0.25 * ks.iter().map(|&k| img.data()[k]).sum::<f64>()
    });
    (out, ok)
}

/// Vertex offset of the parabola through three equally spaced samples.
fn parabola_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * center + plus;
    if denom < 0.0 {
        (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// A match between two dewarped grids in continuous `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridMatch {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub score: f64,
}

/// ZNCC block matching between two equally sized square rasters with
/// validity masks. Template centers lie on a `stride` grid over `a`.
pub fn match_grids(
    img_a: &RasterGray,
    valid_a: &[bool],
    img_b: &RasterGray,
    valid_b: &[bool],
    params: &BlockMatchParams,
) -> Result<Vec<GridMatch>> {
    let n = img_a.width();
    if img_a.height() != n || img_b.width() != n || img_b.height() != n {
        return Err(Error::domain(
            "block matching needs two square rasters of one size",
        ));
    }
    if valid_a.len() != n * n || valid_b.len() != n * n {
        return Err(Error::domain("validity masks do not match the rasters"));
    }
    if params.window.is_multiple_of(2) || params.window < 3 {
        return Err(Error::Config(format!(
            "window must be odd and at least 3, got {}",
            params.window
        )));
    }
    if params.stride == 0 || params.pyramid_levels == 0 {
        return Err(Error::Config(
            "stride and pyramid_levels must be positive".into(),
        ));
    }
    let levels = params
        .pyramid_levels
        .min(1 + (n / params.window).max(1).ilog2() as usize);
    let a = Pyramid::new(img_a, valid_a, params.window, levels);
    let b = Pyramid::new(img_b, valid_b, params.window, levels);
    let radius = params.search_radius as isize;
    let centers: Vec<(isize, isize)> = (0..n as isize)
        .step_by(params.stride)
        .flat_map(|r| (0..n as isize).step_by(params.stride).map(move |c| (r, c)))
        .collect();
    let fine_b = &b.0[0];
    let matches: Vec<GridMatch> = centers
        .par_iter()
        .filter_map(|&(r, c)| {
            let (rb, cb, s) = a.track(&b, r, c, radius, params.min_texture)?;
            if s < params.min_score {
                return None;
            }
            // left-right check from the integer match back into `a`
            let (ra, ca, _) = b.track(&a, rb, cb, radius, 0.0)?;
            let drift = (((ra - r).pow(2) + (ca - c).pow(2)) as f64).sqrt();
            if drift > params.lr_tolerance {
                return None;
            }
            let t = a.0[0].template(r, c, 0.0)?;
            let at = |dr: isize, dc: isize| fine_b.score(&t, rb + dr, cb + dc).unwrap_or(s);
            let dr = parabola_offset(at(-1, 0), s, at(1, 0));
            let dc = parabola_offset(at(0, -1), s, at(0, 1));
            Some(GridMatch {
                a: [r as f64, c as f64],
                b: [rb as f64 + dr, cb as f64 + dc],
                score: s.clamp(0.0, 1.0),
            })
        })
        .collect();
    if matches.len() < params.min_matches {
        return Err(Error::InsufficientMatches {
            found: matches.len(),
            min: params.min_matches,
        });
    }
    Ok(matches)
}

/// Matches two dewarped drops and maps the result back to warped `(i, j)`
/// positions. Both must share one angular grid.
pub fn block_match(
    a: &Dewarped,
    b: &Dewarped,
    ids: (usize, usize),
    params: &BlockMatchParams,
) -> Result<Vec<Correspondence>> {
    if a.grid != b.grid {
        return Err(Error::domain(
            "dewarped drops are on different angular grids",
        ));
    }
    let found = match_grids(&a.image, &a.valid, &b.image, &b.valid, params)?;
    let out: Vec<Correspondence> = found
        .iter()
        .filter_map(|m| {
            let pa = a.source_at(m.a[1], m.a[0])?;
            let pb = b.source_at(m.b[1], m.b[0])?;
            Some(Correspondence {
                drop_a: ids.0,
                pixel_a: [pa[1], pa[0]],
                drop_b: ids.1,
                pixel_b: [pb[1], pb[0]],
                score: m.score,
            })
        })
        .collect();
    if out.len() < params.min_matches {
        return Err(Error::InsufficientMatches {
            found: out.len(),
            min: params.min_matches,
        });
    }
    Ok(out)
}

/// Dewarps every drop onto one grid covering the union of their angular
/// extents.
pub fn dewarp_shared(
    image: &RasterGray,
    drops: &[HeightField],
    config: &OpticalConfig,
    resolution: usize,
) -> Result<Vec<Dewarped>> {
    let maps = drops
        .iter()
        .map(|hf| ForwardMap::build(hf, config))
        .collect::<Result<Vec<_>>>()?;
    let mut ext = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    for e in maps.iter().filter_map(ForwardMap::extent) {
        ext = [
            ext[0].min(e[0]),
            ext[1].min(e[1]),
            ext[2].max(e[2]),
            ext[3].max(e[3]),
        ];
    }
    if !(ext[0] <= ext[2]) {
        return Err(Error::EmptyOutput(
            "every drop pixel is totally reflected".into(),
        ));
    }
    let grid = AngularGrid::covering(ext, resolution)?;
    maps.iter()
        .map(|m| dewarp_on_grid(image, m, grid))
        .collect()
}

#[derive(Clone, Debug)]
pub struct DepthResult {
    /// The correspondences that were traced and triangulated.
    pub correspondences: Vec<Correspondence>,
    pub points: Vec<Vec3>,
    /// Sum of squared ray distances per point.
    pub residuals: Vec<f64>,
    /// False for residual outliers and points in front of the drops.
    pub valid: Vec<bool>,
    /// Per drop, `z` at the warped pixels of valid points; NaN elsewhere.
    pub depth_maps: Vec<FloatMap>,
}

impl DepthResult {
    pub fn valid_points(&self) -> impl Iterator<Item = &Vec3> {
        self.points
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(p, _)| p)
    }

    /// Median `z` of the valid points.
    pub fn median_depth(&self) -> Option<f64> {
        median(self.valid_points().map(|p| p.z).collect())
    }

    pub fn median_residual(&self) -> Option<f64> {
        median(self.residuals.clone())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Triangulated depth from two or more reconstructed drops. Without given
/// correspondences every pair of drops is dewarped and block matched.
pub fn depth_from_drops(
    image: &RasterGray,
    drops: &[HeightField],
    config: &PipelineConfig,
    correspondences: Option<&[Correspondence]>,
) -> Result<DepthResult> {
    if drops.len() < 2 {
        return Err(Error::InsufficientDrops(drops.len()));
    }
    config.validate()?;
    let (w, h) = (image.width(), image.height());
    if drops.iter().any(|d| d.width() != w || d.height() != h) {
        return Err(Error::domain("drop and image grids differ"));
    }
    let bm = &config.stereo.block_match;
    let corr: Vec<Correspondence> = match correspondences {
        Some(c) => c.to_vec(),
        None => {
            let views = dewarp_shared(
                image,
                drops,
                &config.optics,
                config.stereo.dewarp_resolution,
            )?;
            let mut all = Vec::new();
            for a in 0..views.len() {
                for b in a + 1..views.len() {
                    match block_match(&views[a], &views[b], (a, b), bm) {
                        Ok(c) => all.extend(c),
                        Err(Error::InsufficientMatches { found, .. }) => {
                            log::warn!("drops {a} and {b}: only {found} matches, pair skipped");
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            all
        }
    };
    if corr.len() < bm.min_matches {
        return Err(Error::InsufficientMatches {
            found: corr.len(),
            min: bm.min_matches,
        });
    }
    let optics = drops
        .iter()
        .map(|d| DropOptics::new(d, &config.optics))
        .collect::<Result<Vec<_>>>()?;
    let trace = |drop: usize, [i, j]: [f64; 2]| -> Option<Ray> {
        let o = optics.get(drop)?;
        Some(o.trace(j, i).ok()??.ray)
    };
    let solved: Vec<(Correspondence, Result<(Vec3, f64)>)> = corr
        .par_iter()
        .filter_map(|c| {
            let ra = trace(c.drop_a, c.pixel_a)?;
            let rb = trace(c.drop_b, c.pixel_b)?;
            Some((*c, triangulate(&[ra, rb])))
        })
        .collect();
    let mut kept = Vec::new();
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    let mut worst_cond = 0.0f64;
    for (c, r) in solved {
        match r {
            Ok((p, res)) if p.iter().all(|v| v.is_finite()) => {
                kept.push(c);
                points.push(p);
                residuals.push(res);
            }
            Ok(_) => {}
            Err(Error::DegenerateGeometry { cond }) => worst_cond = worst_cond.max(cond),
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::DegenerateGeometry { cond: worst_cond });
    }
    let cutoff = config.stereo.outlier_factor * median(residuals.clone()).unwrap_or(0.0);
    let valid: Vec<bool> = kept
        .iter()
        .zip(&points)
        .zip(&residuals)
        .map(|((c, p), &res)| {
            let floor = drops[c.drop_a]
                .max_height()
                .max(drops[c.drop_b].max_height());
            res <= cutoff && p.z > floor
        })
        .collect();
    let mut sums = vec![(vec![0.0; w * h], vec![0u32; w * h]); drops.len()];
    for ((c, p), _) in kept.iter().zip(&points).zip(&valid).filter(|(_, &v)| v) {
        for (d, [i, j]) in [(c.drop_a, c.pixel_a), (c.drop_b, c.pixel_b)] {
            let (i, j) = (i.round(), j.round());
            if i < 0.0 || j < 0.0 || i as usize >= h || j as usize >= w {
                continue;
            }
            let k = i as usize * w + j as usize;
            sums[d].0[k] += p.z;
            sums[d].1[k] += 1;
        }
    }
    let depth_maps = sums
        .into_iter()
        .map(|(s, n)| {
            let data: Vec<f64> = s
                .iter()
                .zip(&n)
                .map(|(&s, &n)| if n > 0 { s / n as f64 } else { f64::NAN })
                .collect();
            FloatMap::from_f64(w, h, &data)
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "triangulated {} points, {} valid",
        points.len(),
        valid.iter().filter(|&&v| v).count()
    );
    Ok(DepthResult {
        correspondences: kept,
        points,
        residuals,
        valid,
        depth_maps,
    })
}
