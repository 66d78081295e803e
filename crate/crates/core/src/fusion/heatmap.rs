//! Gaussian relaxation of gaze positions onto the feature grid.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::trace::GazeSample;

/// Side of the square feature grid.
pub const GRID: usize = 56;

#[derive(Debug, Clone, PartialEq)]
pub struct GazeHeatmap {
    /// Indexed `[row, column]`; rows follow `y`, columns follow `x`.
    pub grid: Array2<f64>,
    pub source_t: f64,
    pub weight: f64,
}

/// Grid cell `(row, column)` containing a normalized gaze position.
pub fn gaze_cell(p: (f64, f64), size: usize) -> (usize, usize) {
    let cell = |v: f64| ((v * size as f64).floor().max(0.0) as usize).min(size - 1);
    (cell(p.1), cell(p.0))
}

/// Recency weights rising linearly from 0.4 (oldest) to 1.0 (newest).
pub fn recency_weights(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|k| 0.4 + 0.6 * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Heatmap on the default 56-cell grid.
pub fn gaussian_heatmap(p: (f64, f64), weight: f64, sigma: f64) -> Result<GazeHeatmap> {
    gaussian_heatmap_on(GRID, p, weight, sigma)
}

/// `h = w / (sigma sqrt(2 pi)) * exp(-D^2 / (2 sigma^2))`, with `D` measured in
/// grid cells from the cell containing `p`.
pub fn gaussian_heatmap_on(
    size: usize,
    p: (f64, f64),
    weight: f64,
    sigma: f64,
) -> Result<GazeHeatmap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be > 0 (got {sigma})")));
    }
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::Parameter(format!("heatmap weight must be >= 0 (got {weight})")));
    }
    if size == 0 {
        return Err(Error::Parameter("heatmap grid must be non-empty".into()));
    }
    let (cr, cc) = gaze_cell(p, size);
    let peak = weight / (sigma * (2.0 * PI).sqrt());
    let denom = 2.0 * sigma * sigma;
    let grid = Array2::from_shape_fn((size, size), |(r, c)| {
        let dr = r as f64 - cr as f64;
        let dc = c as f64 - cc as f64;
        peak * (-(dr * dr + dc * dc) / denom).exp()
    });
    Ok(GazeHeatmap {
        grid,
        source_t: 0.0,
        weight,
    })
}

/// One heatmap per sample, oldest first. Invalid samples, and missing ones
/// when fewer than `weights.len()` are given, take the oldest valid position.
pub fn build_gaze_stack(
    samples: &[GazeSample],
    weights: &[f64],
    sigma: f64,
    size: usize,
) -> Result<Vec<GazeHeatmap>> {
    let n = weights.len();
    if samples.len() > n {
        return Err(Error::Parameter(format!(
            "{} gaze samples for {n} heatmap weights",
            samples.len()
        )));
    }
    let oldest_valid = samples
        .iter()
        .find(|s| s.valid)
        .ok_or_else(|| Error::Parameter("no valid gaze position in heatmap window".into()))?;
    let pad = n - samples.len();
    (0..n)
        .map(|k| {
            let s = if k < pad { oldest_valid } else { &samples[k - pad] };
            let (p, t) = if s.valid {
                (s.position(), s.t)
            } else {
                (oldest_valid.position(), s.t)
            };
            let mut h = gaussian_heatmap_on(size, p, weights[k], sigma)?;
            h.source_t = if k < pad { oldest_valid.t } else { t };
            Ok(h)
        })
        .collect()
}
