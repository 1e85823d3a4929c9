//! Synthetic scenes and the forward renderer.
//!
//! A scene is one or more textured planes `z = depth` behind the plate. The
//! camera is focused on the plate, so the direct view of the scene is
//! blurred while the images formed inside drops are sharp.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::{validate_alpha, PipelineConfig};
use crate::error::{Error, Result};
use crate::formats::read_pnm;
use crate::geom::{DropMask, HeightField, RasterGray, Vec3};
use crate::optics::CameraModel;
use crate::raytrace::{DropOptics, Ray};
use crate::solver::{initial_volume, solve_fixed_volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<PlaneSpec>,
    /// Background blur radius in pixels.
    #[serde(default)]
    pub blur_radius: f64,
    /// Intensity of totally reflected drop pixels.
    #[serde(default = "default_leak")]
    pub leak: f64,
    /// Intensity of rays that miss every plane.
    #[serde(default = "default_border")]
    pub border: f64,
    #[serde(default)]
    pub drops: Vec<DropSpec>,
}

fn default_leak() -> f64 {
    0.02
}

fn default_border() -> f64 {
    0.5
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    /// Distance from the plate, in pixels.
    pub depth: f64,
    pub texture: Texture,
    /// Scene units per texture unit.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Scene position of the texture origin.
    #[serde(default)]
    pub offset: [f64; 2],
    /// Only scene points with `x` in `[lo, hi)` belong to this plane.
    #[serde(default)]
    pub x_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    Constant {
        value: f64,
    },
    /// Checkerboard with squares of side `square`; `softness` rounds the
    /// edges (0 is a hard step).
    Checker {
        square: f64,
        #[serde(default)]
        softness: f64,
    },
    /// Dark grid lines of `width` every `spacing` units on a light ground.
    Lines {
        spacing: f64,
        width: f64,
    },
    /// Seeded multi-octave value noise with base cell size `cell`.
    Noise {
        seed: u64,
        cell: f64,
        #[serde(default = "default_octaves")]
        octaves: u32,
    },
    /// PGM/PPM image, one texture unit per pixel.
    File {
        path: PathBuf,
    },
}

fn default_octaves() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DropSpec {
    pub shape: DropShape,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DropShape {
    Circle {
        cx: f64,
        cy: f64,
        radius: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    /// Star-shaped blob: a circle with seeded low-order radial harmonics.
    Irregular {
        cx: f64,
        cy: f64,
        radius: f64,
        seed: u64,
        #[serde(default = "default_roughness")]
        roughness: f64,
    },
}

fn default_roughness() -> f64 {
    0.15
}

impl DropShape {
    pub fn mask(&self, width: usize, height: usize) -> Result<DropMask> {
        let mask = match *self {
            DropShape::Circle { cx, cy, radius } => DropMask::disk(width, height, cy, cx, radius)?,
            DropShape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                angle_deg,
            } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                DropMask::from_fn(width, height, |i, j| {
                    let (dx, dy) = (j as f64 - cx, i as f64 - cy);
                    let a = (c * dx + s * dy) / rx;
                    let b = (-s * dx + c * dy) / ry;
                    a * a + b * b <= 1.0
                })?
            }
            DropShape::Irregular {
                cx,
                cy,
                radius,
                seed,
                roughness,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let harmonics: Vec<(f64, f64, f64)> = (2..=5)
                    .map(|k| {
                        let amp = rng.random_range(-roughness..=roughness) / (k as f64 - 1.0);
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        (k as f64, amp, phase)
                    })
                    .collect();
                DropMask::from_fn(width, height, |i, j| {
                    let (dx, dy) = (j as f64 - cx, i as f64 - cy);
                    let theta = dy.atan2(dx);
                    let r = radius
                        * (1.0
                            + harmonics
                                .iter()
                                .map(|(k, a, p)| a * (k * theta + p).cos())
                                .sum::<f64>());
                    dx * dx + dy * dy <= r * r
                })?
            }
        };
        if mask.area() == 0 {
            return Err(Error::domain("drop shape covers no pixels"));
        }
        Ok(mask)
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("scene needs a positive size".into()));
        }
        if self.planes.is_empty() {
            return Err(Error::Config("scene needs at least one plane".into()));
        }
        if !(self.blur_radius >= 0.0) {
            return Err(Error::Config("blur_radius must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.leak) || !(0.0..=1.0).contains(&self.border) {
            return Err(Error::Config("leak and border must lie in [0, 1]".into()));
        }
        for p in &self.planes {
            if !(p.depth > 0.0) || !(p.scale > 0.0) {
                return Err(Error::Config(
                    "plane depth and scale must be positive".into(),
                ));
            }
        }
        for d in &self.drops {
            validate_alpha(d.alpha)?;
        }
        Ok(())
    }

    /// Copy with every noise texture and irregular drop seed offset by
    /// `offset`. Offset 0 returns the spec unchanged.
    pub fn reseeded(&self, offset: u64) -> SceneSpec {
        let mut out = self.clone();
        for p in &mut out.planes {
            if let Texture::Noise { seed, .. } = &mut p.texture {
                *seed = seed.wrapping_add(offset);
            }
        }
        for d in &mut out.drops {
            if let DropShape::Irregular { seed, .. } = &mut d.shape {
                *seed = seed.wrapping_add(offset);
            }
        }
        out
    }
}

/// Deterministic 64-bit mix (SplitMix64 finalizer).
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = mix(seed ^ mix(octave as u64 ^ mix(ix as u64 ^ mix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, cell: f64, octaves: u32, x: f64, y: f64) -> f64 {
    let (mut sum, mut norm, mut amp, mut size) = (0.0, 0.0, 1.0, cell);
    for o in 0..octaves.max(1) {
        let (fx, fy) = (x / size, y / size);
        let (ix, iy) = (fx.floor(), fy.floor());
        let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
        let (ix, iy) = (ix as i64, iy as i64);
        let a = lattice(seed, o, ix, iy);
        let b = lattice(seed, o, ix + 1, iy);
        let c = lattice(seed, o, ix, iy + 1);
        let d = lattice(seed, o, ix + 1, iy + 1);
        let v = (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty;
        sum += amp * v;
        norm += amp;
        amp *= 0.5;
        size *= 0.5;
    }
    // stretch the contrast that averaging octaves takes away
    (0.5 + 1.8 * (sum / norm - 0.5)).clamp(0.0, 1.0)
}

/// A texture ready for sampling.
enum Sampler {
    Constant(f64),
    Checker { square: f64, softness: f64 },
    Lines { spacing: f64, width: f64 },
    Noise { seed: u64, cell: f64, octaves: u32 },
    Raster(RasterGray),
}

impl Sampler {
    fn load(t: &Texture, base: &Path) -> Result<Self> {
        Ok(match t {
            Texture::Constant { value } => Sampler::Constant(value.clamp(0.0, 1.0)),
            Texture::Checker { square, softness } => Sampler::Checker {
                square: *square,
                softness: *softness,
            },
            Texture::Lines { spacing, width } => Sampler::Lines {
                spacing: *spacing,
                width: *width,
            },
            Texture::Noise {
                seed,
                cell,
                octaves,
            } => Sampler::Noise {
                seed: *seed,
                cell: *cell,
                octaves: *octaves,
            },
            Texture::File { path } => Sampler::Raster(read_pnm(base.join(path))?),
        })
    }

    /// Value at texture coordinates, or `None` off a finite texture.
    fn sample(&self, s: f64, t: f64) -> Option<f64> {
        Some(match self {
            Sampler::Constant(v) => *v,
            Sampler::Checker { square, softness } => {
                let f = (std::f64::consts::PI * s / square).sin()
                    * (std::f64::consts::PI * t / square).sin();
                if *softness > 0.0 {
                    0.5 + 0.5 * (f / softness).clamp(-1.0, 1.0)
                } else if f >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Lines { spacing, width } => {
                let dist = |a: f64| {
                    let r = a.rem_euclid(*spacing);
                    r.min(spacing - r)
                };
                let d = dist(s).min(dist(t));
                let edge = (d - 0.5 * width + 0.5).clamp(0.0, 1.0);
                0.1 + 0.8 * edge
            }
            Sampler::Noise {
                seed,
                cell,
                octaves,
            } => value_noise(*seed, *cell, *octaves, s, t),
            Sampler::Raster(img) => {
                let (w, h) = (img.width() as f64, img.height() as f64);
                if s < 0.0 || t < 0.0 || s > w - 1.0 || t > h - 1.0 {
                    return None;
                }
                img.bilinear(s, t)
            }
        })
    }
}

/// Loaded scene planes.
pub struct Scene {
    planes: Vec<(PlaneSpec, Sampler)>,
    border: f64,
}

/// What a ray sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneHit {
    pub point: Vec3,
    pub value: f64,
}

impl Scene {
    /// Loads textures; relative file paths resolve against `base`.
    pub fn load(spec: &SceneSpec, base: &Path) -> Result<Self> {
        spec.validate()?;
        let planes = spec
            .planes
            .iter()
            .map(|p| Ok((p.clone(), Sampler::load(&p.texture, base)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            planes,
            border: spec.border,
        })
    }

    /// Nearest plane hit along `ray`. Misses give the border value.
    pub fn shade(&self, ray: &Ray) -> Option<SceneHit> {
        let mut best: Option<(f64, usize, Vec3)> = None;
        for (k, (p, _)) in self.planes.iter().enumerate() {
            let Some(t) = ray.hit_depth(p.depth) else {
                continue;
            };
            let q = ray.at(t);
            if let Some([lo, hi]) = p.x_range {
                if !(lo..hi).contains(&q.x) {
                    continue;
                }
            }
            if best.is_none_or(|(bt, _, _)| t < bt) {
                best = Some((t, k, q));
            }
        }
        let (_, k, q) = best?;
        let (p, s) = &self.planes[k];
        let value = s
            .sample((q.x - p.offset[0]) / p.scale, (q.y - p.offset[1]) / p.scale)
            .unwrap_or(self.border);
        Some(SceneHit { point: q, value })
    }

    pub fn max_depth(&self) -> f64 {
        self.planes.iter().map(|(p, _)| p.depth).fold(0.0, f64::max)
    }

    pub fn min_depth(&self) -> f64 {
        self.planes
            .iter()
            .map(|(p, _)| p.depth)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn border(&self) -> f64 {
        self.border
    }
}

/// Separable Gaussian blur with `σ = radius / 3`, edges replicated.
pub fn gaussian_blur(image: &RasterGray, radius: f64) -> RasterGray {
    if radius <= 0.0 {
        return image.clone();
    }
    let sigma = radius / 3.0;
    let half = radius.ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let (w, h) = (image.width() as isize, image.height() as isize);
    let src = image.data();
    let pass = |data: &[f64], horizontal: bool| -> Vec<f64> {
        (0..(w * h) as usize)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx as isize / w, idx as isize % w);
                kernel
                    .iter()
                    .enumerate()
                    .map(|(n, kv)| {
                        let o = n as isize - half;
                        let (ii, jj) = if horizontal {
                            (i, (j + o).clamp(0, w - 1))
                        } else {
                            ((i + o).clamp(0, h - 1), j)
                        };
                        kv * data[(ii * w + jj) as usize]
                    })
                    .sum()
            })
            .collect()
    };
    let tmp = pass(src, true);
    RasterGray::from_vec(image.width(), image.height(), pass(&tmp, false)).expect("same dimensions")
}

/// Rendered image plus per-pixel ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Render {
    pub image: RasterGray,
    /// Scene depth seen by each drop pixel; `NaN` elsewhere and where
    /// totally reflected.
    pub depth: Vec<f64>,
    /// Total transmittance per drop pixel; 0 elsewhere.
    pub transmittance: Vec<f64>,
}

/// Renders the scene seen through the given drops.
pub fn render_with_truth(
    scene: &Scene,
    spec: &SceneSpec,
    drops: &[HeightField],
    config: &crate::config::OpticalConfig,
) -> Result<Render> {
    config.validate()?;
    let (w, h) = (spec.width, spec.height);
    for d in drops {
        if d.width() != w || d.height() != h {
            return Err(Error::domain("drop grid differs from the scene size"));
        }
        if d.max_height() >= scene.min_depth() {
            return Err(Error::domain("scene plane must lie behind every drop"));
        }
    }
    let cam = CameraModel::new(config, w, h);
    let background: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let (x, y) = ((k % w) as f64, (k / w) as f64);
            let ray = Ray {
                origin: Vec3::new(x, y, 0.0),
                direction: cam.direct_ray(x, y),
            };
            scene.shade(&ray).map_or(scene.border(), |hit| hit.value)
        })
        .collect();
    let background = gaussian_blur(&RasterGray::from_vec(w, h, background)?, spec.blur_radius);
    let mut data = background.data().to_vec();
    let mut depth = vec![f64::NAN; w * h];
    let mut trans = vec![0.0; w * h];
    // a drop without water is no drop at all
    for hf in drops.iter().filter(|d| d.max_height() > 0.0) {
        let optics = DropOptics::new(hf, config)?;
        let pixels: Vec<(usize, usize)> = hf.mask().pixels().collect();
        let shaded: Vec<(f64, f64, f64)> = pixels
            .par_iter()
            .map(|&(i, j)| match optics.trace_pixel(i, j) {
                None => (spec.leak, f64::NAN, 0.0),
                Some(t) => {
                    let tr = t.transmittance();
                    match scene.shade(&t.ray) {
                        Some(hit) => (hit.value * tr, hit.point.z, tr),
                        None => (scene.border() * tr, f64::NAN, tr),
                    }
                }
            })
            .collect();
        for (&(i, j), (v, d, t)) in pixels.iter().zip(shaded) {
            let k = i * w + j;
            data[k] = v;
            depth[k] = d;
            trans[k] = t;
        }
    }
    Ok(Render {
        image: RasterGray::from_vec(w, h, data)?,
        depth,
        transmittance: trans,
    })
}

/// Renders the scene seen through the given drops.
pub fn render_synthetic(
    spec: &SceneSpec,
    drops: &[HeightField],
    config: &crate::config::OpticalConfig,
    base: &Path,
) -> Result<RasterGray> {
    let scene = Scene::load(spec, base)?;
    Ok(render_with_truth(&scene, spec, drops, config)?.image)
}

/// Ground-truth drop surfaces: each drop's mask solved at its own α.
pub fn build_drops(spec: &SceneSpec, config: &PipelineConfig) -> Result<Vec<HeightField>> {
    spec.validate()?;
    spec.drops
        .par_iter()
        .map(|d| {
            let mask = d.shape.mask(spec.width, spec.height)?;
            let v = initial_volume(&mask, d.alpha)?;
            Ok(solve_fixed_volume(&mask, v, &config.solver, &config.optics)?.0)
        })
        .collect()
}

/// Convenience for tests and examples: build drops, load textures, render.
pub fn synthesize(
    spec: &SceneSpec,
    config: &PipelineConfig,
    base: &Path,
) -> Result<(Render, Vec<HeightField>)> {
    let drops = build_drops(spec, config)?;
    let scene = Scene::load(spec, base)?;
    let render = render_with_truth(&scene, spec, &drops, &config.optics)?;
    Ok((render, drops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::OpticalConfig;
    use crate::optics::dark_band_mask;

    fn plane(texture: Texture) -> PlaneSpec {
        PlaneSpec {
            depth: 2000.0,
            texture,
            scale: 1.0,
            offset: [0.0, 0.0],
            x_range: None,
        }
    }

    fn spec(texture: Texture) -> SceneSpec {
        SceneSpec {
            width: 121,
            height: 121,
            planes: vec![plane(texture)],
            blur_radius: 4.0,
            leak: 0.02,
            border: 0.5,
            drops: vec![],
        }
    }

    #[test]
    fn zero_height_drops_show_blurred_background() {
        let s = spec(Texture::Checker {
            square: 40.0,
            softness: 0.0,
        });
        let scene = Scene::load(&s, Path::new(".")).unwrap();
        let bg = render_with_truth(&scene, &s, &[], &OpticalConfig::water()).unwrap();
        let mask = DropMask::disk(121, 121, 60.0, 60.0, 30.0).unwrap();
        let hf = HeightField::flat(mask);
        let r = render_with_truth(&scene, &s, &[hf], &OpticalConfig::water()).unwrap();
        assert_eq!(r.image, bg.image);
    }

    #[test]
    fn cap_over_checker_has_dark_annulus() {
        let s = spec(Texture::Checker {
            square: 200.0,
            softness: 0.1,
        });
        let config = PipelineConfig::new(OpticalConfig::water());
        let mask = DropMask::disk(121, 121, 60.0, 60.0, 50.0).unwrap();
        let v = initial_volume(&mask, 0.3).unwrap();
        let hf = solve_fixed_volume(&mask, v, &config.solver, &config.optics)
            .unwrap()
            .0;
        let scene = Scene::load(&s, Path::new(".")).unwrap();
        let r = render_with_truth(&scene, &s, std::slice::from_ref(&hf), &config.optics).unwrap();
        let band = dark_band_mask(&hf, &config.optics).unwrap();
        let dark: Vec<bool> = r
            .depth
            .iter()
            .zip(mask.bits())
            .map(|(d, &m)| m && d.is_nan())
            .collect();
        let agree = mask
            .pixels()
            .filter(|&(i, j)| band.contains(i, j) == dark[i * 121 + j])
            .count();
        assert!(agree as f64 / mask.area() as f64 >= 0.95);
        assert!(band.count() > 100);
        // the annulus is dark, the interior is not
        assert!(r.image.get(60, 60) > 0.05 || r.image.get(60, 61) > 0.05);
    }

    #[test]
    fn doubling_alpha_widens_band() {
        let s = spec(Texture::Constant { value: 0.8 });
        let config = PipelineConfig::new(OpticalConfig::water());
        let scene = Scene::load(&s, Path::new(".")).unwrap();
        let mask = DropMask::disk(121, 121, 60.0, 60.0, 50.0).unwrap();
        let mut counts = vec![];
        for a in [0.15, 0.30] {
            let v = initial_volume(&mask, a).unwrap();
            let hf = solve_fixed_volume(&mask, v, &config.solver, &config.optics)
                .unwrap()
                .0;
            let r = render_with_truth(&scene, &s, &[hf], &config.optics).unwrap();
            counts.push(
                r.depth
                    .iter()
                    .zip(mask.bits())
                    .filter(|(d, &m)| m && d.is_nan())
                    .count(),
            );
        }
        assert!(counts[1] > counts[0], "{counts:?}");
    }

    #[test]
    fn constant_plane_gives_texture_times_transmittance() {
        let s = spec(Texture::Constant { value: 0.7 });
        let config = PipelineConfig::new(OpticalConfig::water());
        let mask = DropMask::disk(121, 121, 60.0, 60.0, 40.0).unwrap();
        let v = initial_volume(&mask, 0.2).unwrap();
        let hf = solve_fixed_volume(&mask, v, &config.solver, &config.optics)
            .unwrap()
            .0;
        let scene = Scene::load(&s, Path::new(".")).unwrap();
        let r = render_with_truth(&scene, &s, &[hf], &config.optics).unwrap();
        for k in 0..121 * 121 {
            if mask.bits()[k] && r.transmittance[k] > 0.0 {
                assert!((r.image.data()[k] - 0.7 * r.transmittance[k]).abs() < 1e-12);
                assert!((r.image.data()[k] / r.transmittance[k] - 0.7).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn noise_is_deterministic_and_textured() {
        let a = value_noise(7, 20.0, 3, 13.5, -40.25);
        assert_eq!(a, value_noise(7, 20.0, 3, 13.5, -40.25));
        assert_ne!(a, value_noise(8, 20.0, 3, 13.5, -40.25));
        let vals: Vec<f64> = (0..400)
            .map(|k| value_noise(1, 10.0, 3, k as f64 * 3.1, 0.0))
            .collect();
        let mean = vals.iter().sum::<f64>() / 400.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 400.0;
        assert!(var.sqrt() > 0.1);
    }

    #[test]
    fn irregular_shape_is_one_component() {
        for seed in 0..6 {
            let shape = DropShape::Irregular {
                cx: 60.0,
                cy: 60.0,
                radius: 40.0,
                seed,
                roughness: 0.2,
            };
            let m = shape.mask(121, 121).unwrap();
            assert!(m.area() > 2000);
        }
    }

    #[test]
    fn two_planes_split_by_x() {
        let mut s = spec(Texture::Constant { value: 0.2 });
        s.planes[0].x_range = Some([f64::NEG_INFINITY, 60.0]);
        s.planes.push(PlaneSpec {
            depth: 3000.0,
            x_range: Some([60.0, f64::INFINITY]),
            ..plane(Texture::Constant { value: 0.9 })
        });
        let scene = Scene::load(&s, Path::new(".")).unwrap();
        let left = Ray::new(Vec3::new(0.0, 0.0, 0.0), Vec3::z()).unwrap();
        let right = Ray::new(Vec3::new(100.0, 0.0, 0.0), Vec3::z()).unwrap();
        assert_eq!(scene.shade(&left).unwrap().point.z, 2000.0);
        assert_eq!(scene.shade(&right).unwrap().point.z, 3000.0);
        assert_eq!(scene.shade(&right).unwrap().value, 0.9);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = RasterGray::filled(20, 10, 0.3);
        let b = gaussian_blur(&img, 5.0);
        assert!(b.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}
