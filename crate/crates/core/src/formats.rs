//! File formats: binary PGM/PPM, little-endian PFM, JSON configs, and
//! correspondence CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geom::{DropMask, HeightField, RasterGray};
use crate::stereo::Correspondence;

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Splits off `count` whitespace-separated header tokens, skipping `#`
/// comments. Returns the tokens and the offset of the byte after the single
/// whitespace that ends the header.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if pos >= bytes.len() {
        return None;
    }
    Some((tokens, pos + 1))
}

/// Reads a binary PGM (P5) or PPM (P6) with maxval 255. Color images are
/// averaged to gray.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<RasterGray> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (tok, offset) =
        header_tokens(&bytes, 4).ok_or_else(|| format_err(path, "truncated header"))?;
    let channels = match tok[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        "P2" | "P3" => return Err(Error::Unsupported(format!("ASCII PNM {}", tok[0]))),
        m => return Err(format_err(path, format!("unknown magic {m:?}"))),
    };
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| format_err(path, format!("bad {what} {s:?}")))
    };
    let width = parse(&tok[1], "width")?;
    let height = parse(&tok[2], "height")?;
    let maxval = parse(&tok[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "maxval {maxval} (only 8-bit, maxval 255)"
        )));
    }
    let need = width * height * channels;
    let body = &bytes[offset..];
    if body.len() < need {
        return Err(format_err(
            path,
            format!("expected {need} pixel bytes, found {}", body.len()),
        ));
    }
    let data = body[..need]
        .chunks_exact(channels)
        .map(|px| px.iter().map(|&b| b as f64).sum::<f64>() / (255.0 * channels as f64))
        .collect();
    RasterGray::from_vec(width, height, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_pgm(path: impl AsRef<Path>, image: &RasterGray) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v)));
    write_bytes(path.as_ref(), &out)
}

/// Writes a gray raster as a three-channel PPM.
pub fn write_ppm(path: impl AsRef<Path>, image: &RasterGray) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for &v in image.data() {
        let q = quantize(v);
        out.extend([q, q, q]);
    }
    write_bytes(path.as_ref(), &out)
}

/// Reads a 0/255 mask; any nonzero byte is inside.
pub fn read_mask(path: impl AsRef<Path>) -> Result<DropMask> {
    let path = path.as_ref();
    let img = read_pnm(path)?;
    let bits = img.data().iter().map(|&v| v > 0.0).collect();
    DropMask::new(img.width(), img.height(), bits).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &DropMask) -> Result<()> {
    let data = mask
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let img = RasterGray::from_vec(mask.width(), mask.height(), data)?;
    write_pgm(path, &img)
}

/// Single-channel float map as stored in a PFM file. `NaN` marks invalid
/// pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "float map of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_f64(width: usize, height: usize, data: &[f64]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| v as f32).collect())
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.width + j]
    }
}

pub fn write_pfm(path: impl AsRef<Path>, map: &FloatMap) -> Result<()> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.data.len() * 4);
    for row in map.data.chunks_exact(map.width.max(1)).rev() {
        for v in row {
            out.extend(v.to_le_bytes());
        }
    }
    write_bytes(path.as_ref(), &out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FloatMap> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (tok, offset) =
        header_tokens(&bytes, 4).ok_or_else(|| format_err(path, "truncated header"))?;
    match tok[0].as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Unsupported("color PFM (PF)".into())),
        m => return Err(format_err(path, format!("unknown magic {m:?}"))),
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| format_err(path, format!("bad {what} {s:?}")))
    };
    let width = parse(&tok[1], "width")?;
    let height = parse(&tok[2], "height")?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| format_err(path, format!("bad scale {:?}", tok[3])))?;
    if scale > 0.0 {
        return Err(Error::Unsupported("big-endian PFM (positive scale)".into()));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "scale must be nonzero"));
    }
    let need = width * height * 4;
    let body = &bytes[offset..];
    if body.len() < need {
        return Err(format_err(
            path,
            format!("expected {need} data bytes, found {}", body.len()),
        ));
    }
    let mut data = vec![0f32; width * height];
    for (r, row) in body[..need].chunks_exact(width.max(1) * 4).enumerate() {
        let i = height - 1 - r;
        for (j, b) in row.chunks_exact(4).enumerate() {
            data[i * width + j] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    FloatMap::new(width, height, data)
}

/// Writes a height field with `NaN` outside the mask.
pub fn write_height_field(path: impl AsRef<Path>, hf: &HeightField) -> Result<()> {
    let data = hf
        .heights()
        .iter()
        .zip(hf.mask().bits())
        .map(|(&z, &m)| if m { z as f32 } else { f32::NAN })
        .collect();
    write_pfm(path, &FloatMap::new(hf.width(), hf.height(), data)?)
}

/// Reads a height field; finite pixels form the mask.
pub fn read_height_field(path: impl AsRef<Path>) -> Result<HeightField> {
    let path = path.as_ref();
    let map = read_pfm(path)?;
    let bits: Vec<bool> = map.data.iter().map(|v| v.is_finite()).collect();
    let z = map
        .data
        .iter()
        .map(|&v| if v.is_finite() { v as f64 } else { 0.0 })
        .collect();
    let mask =
        DropMask::new(map.width, map.height, bits).map_err(|e| format_err(path, e.to_string()))?;
    HeightField::new(mask, z).map_err(|e| format_err(path, e.to_string()))
}

/// Reads any JSON config document, rejecting unknown keys where the type
/// does.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("config types serialize");
    text.push('\n');
    write_bytes(path.as_ref(), text.as_bytes())
}

/// Reads and validates a pipeline config.
pub fn read_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(path: impl AsRef<Path>, config: &PipelineConfig) -> Result<()> {
    write_json(path, config)
}

/// JSON schema of the pipeline config, with defaults.
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(PipelineConfig)).expect("schema serializes")
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrespondenceRow {
    drop_a: usize,
    i_a: f64,
    j_a: f64,
    drop_b: usize,
    i_b: f64,
    j_b: f64,
    score: f64,
}

pub fn write_correspondences(path: impl AsRef<Path>, list: &[Correspondence]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for c in list {
        w.serialize(CorrespondenceRow {
            drop_a: c.drop_a,
            i_a: c.pixel_a[0],
            j_a: c.pixel_a[1],
            drop_b: c.drop_b,
            i_b: c.pixel_b[0],
            j_b: c.pixel_b[1],
            score: c.score,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<Vec<Correspondence>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let expected = ["drop_a", "i_a", "j_a", "drop_b", "i_b", "j_b", "score"];
    if header != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: CorrespondenceRow = rec.deserialize(None).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("score {} outside [0, 1]", row.score),
            });
        }
        out.push(Correspondence {
            drop_a: row.drop_a,
            pixel_a: [row.i_a, row.j_a],
            drop_b: row.drop_b,
            pixel_b: [row.i_b, row.j_b],
            score: row.score,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct PointRow {
    x: f64,
    y: f64,
    z: f64,
    residual: f64,
    valid: u8,
    drop_a: usize,
    i_a: f64,
    j_a: f64,
    drop_b: usize,
    i_b: f64,
    j_b: f64,
}

/// Triangulated points, one row per correspondence, with the residual and
/// validity flag.
pub fn write_points(path: impl AsRef<Path>, result: &crate::stereo::DepthResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (k, p) in result.points.iter().enumerate() {
        let c = &result.correspondences[k];
        w.serialize(PointRow {
            x: p.x,
            y: p.y,
            z: p.z,
            residual: result.residuals[k],
            valid: result.valid[k] as u8,
            drop_a: c.drop_a,
            i_a: c.pixel_a[0],
            j_a: c.pixel_a[1],
            drop_b: c.drop_b,
            i_b: c.pixel_b[0],
            j_b: c.pixel_b[1],
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        _ => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
    }
}
