//! Forecast error metrics, pooled with equal weight over samples, horizons,
//! and channels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pooled (MSE, MAE) over a batch of forecasts.
pub fn mse_mae(predictions: &[DMatrix<f64>], truths: &[DMatrix<f64>]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no samples to score"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs truth {:?}",
                p.shape(),
                t.shape()
            )));
        }
        for (a, b) in p.iter().zip(t.iter()) {
            let e = a - b;
            sq += e * e;
            abs += e.abs();
            count += 1;
        }
    }
    Ok((sq / count as f64, abs / count as f64))
}

/// MSE of a single forecast (mean over its T·M entries).
pub fn sample_mse(prediction: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if prediction.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs truth {:?}",
            prediction.shape(),
            truth.shape()
        )));
    }
    if prediction.is_empty() {
        return Err(Error::EmptyInput("empty forecast"));
    }
    let sq: f64 = prediction
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / prediction.len() as f64)
}

/// Relative improvement in percent: positive when `adapted` beats `base`.
pub fn improvement_percent(base: f64, adapted: f64) -> f64 {
    (base - adapted) / base * 100.0
}
