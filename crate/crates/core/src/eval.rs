//! Error statistics between predicted and true maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::FloatMap;

/// What errors are divided by before reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Equivalent diameter `sqrt(4A/π)` of the truth's finite pixels.
    DropDiameter,
    /// Median of the truth's finite values.
    SceneDepth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pixels finite in both maps.
    pub count: usize,
    pub rms: f64,
    pub median_abs: f64,
    pub max_abs: f64,
    pub normalization: Normalization,
    pub scale: f64,
    /// `rms / scale`.
    pub rms_rel: f64,
    pub median_rel: f64,
}

/// Compares two maps on the pixels where both are finite.
pub fn evaluate(
    pred: &FloatMap,
    truth: &FloatMap,
    normalization: Normalization,
) -> Result<EvalReport> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(Error::domain(format!(
            "prediction is {}x{} but truth is {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let finite: Vec<f64> = truth
        .data
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| v as f64)
        .collect();
    let scale = match normalization {
        Normalization::DropDiameter => (4.0 * finite.len() as f64 / std::f64::consts::PI).sqrt(),
        Normalization::SceneDepth => crate::stereo::median(finite).unwrap_or(f64::NAN),
    };
    let errs: Vec<f64> = pred
        .data
        .iter()
        .zip(&truth.data)
        .filter(|(p, t)| p.is_finite() && t.is_finite())
        .map(|(&p, &t)| (p as f64 - t as f64).abs())
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyOutput("no pixel is finite in both maps".into()));
    }
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    let max_abs = errs.iter().cloned().fold(0.0, f64::max);
    let count = errs.len();
    let median_abs = crate::stereo::median(errs).unwrap_or(f64::NAN);
    Ok(EvalReport {
        count,
        rms,
        median_abs,
        max_abs,
        normalization,
        scale,
        rms_rel: rms / scale,
        median_rel: median_abs / scale,
    })
}

/// RMS height difference over the mask of `truth`, as a fraction of its
/// equivalent diameter. Both fields must share the mask grid.
pub fn height_rms_fraction(
    pred: &crate::geom::HeightField,
    truth: &crate::geom::HeightField,
) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::domain("height fields differ in size"));
    }
    let mask = truth.mask();
    let n = mask.area();
    if n == 0 {
        return Err(Error::EmptyOutput("empty mask".into()));
    }
    let ss: f64 = mask
        .pixels()
        .map(|(i, j)| (pred.get(i, j) - truth.get(i, j)).powi(2))
        .sum();
    Ok((ss / n as f64).sqrt() / mask.equivalent_diameter())
}
