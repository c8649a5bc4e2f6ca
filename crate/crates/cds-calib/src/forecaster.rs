//! Forecasting models as (frozen feature extractor, linear prediction head)
//! pairs, plus the head-training routines the rest of the toolkit relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::WindowSample;
use crate::error::{Error, Result};

/// Gram matrices with condition number at or above this are refused when
/// fitting without regularization.
const CONDITION_LIMIT: f64 = 1e12;

/// A linear map from a d-dimensional feature vector to T·M forecast entries
/// (row-major over the T×M future).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHead {
    /// d×(T·M): one column per output entry.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl PredictionHead {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "head has {} output columns but bias length {}",
                weights.ncols(),
                bias.len()
            )));
        }
        let head = Self { weights, bias };
        if !head.is_finite() {
            return Err(Error::NonFiniteUpdate("prediction head construction"));
        }
        Ok(head)
    }

    /// Feature dimension d.
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Number of output entries (T·M for a full head, T for a per-channel one).
    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Wᵀx + b.
    pub fn predict(&self, feature: &DVector<f64>) -> DVector<f64> {
        self.weights.tr_mul(feature) + &self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite()) && self.bias.iter().all(|v| v.is_finite())
    }
}

/// Fits a head by ridge-regularized least squares in closed form.
///
/// The bias is fitted through an appended all-ones column and is *not*
/// regularized: the solve minimizes ‖targets − features·W − 1bᵀ‖² + ridge·‖W‖².
/// With `ridge = 0` the d×d Gram matrix must be invertible (condition number
/// below 1e12), otherwise `SingularDesign` is returned.
pub fn fit_head_least_squares(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: f64,
) -> Result<PredictionHead> {
    let n = features.nrows();
    let d = features.ncols();
    if n == 0 {
        return Err(Error::EmptyInput("least-squares fit needs at least one row"));
    }
    if targets.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} target rows",
            n,
            targets.nrows()
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "ridge",
            reason: format!("must be a finite nonnegative real, got {ridge}"),
        });
    }
    if ridge == 0.0 {
        let gram = features.tr_mul(features);
        let eigen = SymmetricEigen::new(gram);
        let max = eigen.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eigen.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if !(min > 0.0) || max / min >= CONDITION_LIMIT {
            return Err(Error::SingularDesign(format!(
                "unregularized Gram matrix has eigenvalue range [{min:.3e}, {max:.3e}]"
            )));
        }
    }

    // Augmented design [features | 1]; ridge touches only the weight block of
    // the normal matrix, leaving the bias row/column untouched.
    let mut augmented = DMatrix::zeros(n, d + 1);
    augmented.view_mut((0, 0), (n, d)).copy_from(features);
    augmented.column_mut(d).fill(1.0);
    let mut normal = augmented.tr_mul(&augmented);
    for i in 0..d {
        normal[(i, i)] += ridge;
    }
    let rhs = augmented.tr_mul(targets);
    let solution = nalgebra::Cholesky::new(normal)
        .ok_or_else(|| {
            Error::SingularDesign("augmented normal matrix is not positive definite".into())
        })?
        .solve(&rhs);

    let weights = solution.rows(0, d).into_owned();
    let bias = DVector::from_iterator(targets.ncols(), solution.row(d).iter().cloned());
    PredictionHead::new(weights, bias)
}

/// One pass of mini-batch gradient descent on MSE over `pairs`.
///
/// Batches are taken in dataset order (no shuffling, so repeated runs are
/// bit-identical); the loss for each batch is the squared error averaged over
/// both the batch and the output entries, and the last batch may be smaller
/// than `batch_size`. Returns a new head; the input head is untouched.
/// `lr = 0` is allowed and is the identity.
pub fn sgd_epoch(
    head: &PredictionHead,
    pairs: &[(DVector<f64>, DVector<f64>)],
    lr: f64,
    batch_size: usize,
) -> Result<PredictionHead> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("sgd_epoch over an empty dataset"));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "lr",
            reason: format!("must be a finite nonnegative real, got {lr}"),
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            reason: "must be at least 1".into(),
        });
    }
    let d = head.input_dim();
    let out = head.output_dim();
    for (i, (x, y)) in pairs.iter().enumerate() {
        if x.len() != d || y.len() != out {
            return Err(Error::ShapeMismatch(format!(
                "pair {i} has shapes ({}, {}), head expects ({d}, {out})",
                x.len(),
                y.len()
            )));
        }
    }

    let mut weights = head.weights.clone();
    let mut bias = head.bias.clone();
    for batch in pairs.chunks(batch_size) {
        let mut grad_w = DMatrix::zeros(d, out);
        let mut grad_b = DVector::zeros(out);
        for (x, y) in batch {
            let err = weights.tr_mul(x) + &bias - y;
            grad_w.gemm(1.0, x, &err.transpose(), 1.0);
            grad_b += err;
        }
        let step = lr * 2.0 / (batch.len() * out) as f64;
        weights.zip_apply(&grad_w, |w, g| *w -= step * g);
        bias.axpy(-step, &grad_b, 1.0);
    }
    let adapted = PredictionHead { weights, bias };
    if !adapted.is_finite() {
        return Err(Error::NonFiniteUpdate("sgd_epoch produced a non-finite head"));
    }
    Ok(adapted)
}

/// A model that maps lookback windows to T×M forecasts. The feature extractor
/// part is frozen; only prediction heads ever change, and `fine_tuned` hands
/// back an adapted *copy* so the base model can serve many adaptation sessions.
pub trait Forecaster {
    fn name(&self) -> &str;
    fn horizon(&self) -> usize;
    fn channels(&self) -> usize;
    /// Forecasts the window's future from its history: a T×M matrix.
    fn forecast_window(&self, window: &WindowSample) -> Result<DMatrix<f64>>;
    /// One epoch of MSE gradient descent on the head(s) over `dctx`.
    /// `batch_size = None` means one full batch.
    fn fine_tuned(
        &self,
        dctx: &[&WindowSample],
        lr: f64,
        batch_size: Option<usize>,
    ) -> Result<Box<dyn Forecaster>>;
}

/// Channel-independent direct linear forecaster: channel m's L history values
/// feed a dedicated L→T head. No trend/seasonal decomposition, no cross-channel
/// mixing.
#[derive(Debug, Clone)]
pub struct LinearForecaster {
    heads: Vec<PredictionHead>,
    lookback: usize,
    horizon: usize,
}

impl LinearForecaster {
    /// Fits one head per channel by closed-form ridge over the training windows.
    pub fn fit(windows: &[WindowSample], ridge: f64) -> Result<Self> {
        let first = windows
            .first()
            .ok_or(Error::EmptyInput("no training windows"))?;
        let (lookback, horizon, channels) =
            (first.lookback(), first.horizon(), first.channels());
        let n = windows.len();
        let mut heads = Vec::with_capacity(channels);
        let mut features = DMatrix::zeros(n, lookback);
        let mut targets = DMatrix::zeros(n, horizon);
        for m in 0..channels {
            for (i, w) in windows.iter().enumerate() {
                if w.lookback() != lookback || w.horizon() != horizon || w.channels() != channels {
                    return Err(Error::ShapeMismatch(format!(
                        "window {i} has shape ({}, {}, {}), expected ({lookback}, {horizon}, {channels})",
                        w.lookback(),
                        w.horizon(),
                        w.channels()
                    )));
                }
                features.row_mut(i).tr_copy_from(&w.history.column(m));
                targets.row_mut(i).tr_copy_from(&w.future.column(m));
            }
            heads.push(fit_head_least_squares(&features, &targets, ridge)?);
        }
        Ok(Self { heads, lookback, horizon })
    }

    /// Builds a forecaster from pre-made per-channel heads (each L×T).
    pub fn from_heads(heads: Vec<PredictionHead>, lookback: usize, horizon: usize) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::EmptyInput("a forecaster needs at least one head"));
        }
        for (m, h) in heads.iter().enumerate() {
            if h.input_dim() != lookback || h.output_dim() != horizon {
                return Err(Error::ShapeMismatch(format!(
                    "head {m} is {}×{}, expected {lookback}×{horizon}",
                    h.input_dim(),
                    h.output_dim()
                )));
            }
        }
        Ok(Self { heads, lookback, horizon })
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn heads(&self) -> &[PredictionHead] {
        &self.heads
    }

    fn check_window(&self, window: &WindowSample) -> Result<()> {
        if window.lookback() != self.lookback || window.channels() != self.heads.len() {
            return Err(Error::ShapeMismatch(format!(
                "window history is {}×{}, model expects {}×{}",
                window.lookback(),
                window.channels(),
                self.lookback,
                self.heads.len()
            )));
        }
        Ok(())
    }
}

impl Forecaster for LinearForecaster {
    fn name(&self) -> &str {
        "linear"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn channels(&self) -> usize {
        self.heads.len()
    }

    fn forecast_window(&self, window: &WindowSample) -> Result<DMatrix<f64>> {
        self.check_window(window)?;
        let mut forecast = DMatrix::zeros(self.horizon, self.heads.len());
        for (m, head) in self.heads.iter().enumerate() {
            let feature = DVector::from_iterator(self.lookback, window.history.column(m).iter().cloned());
            forecast.column_mut(m).copy_from(&head.predict(&feature));
        }
        Ok(forecast)
    }

    fn fine_tuned(
        &self,
        dctx: &[&WindowSample],
        lr: f64,
        batch_size: Option<usize>,
    ) -> Result<Box<dyn Forecaster>> {
        if dctx.is_empty() {
            return Err(Error::EmptyInput("fine-tuning needs a nonempty context set"));
        }
        for w in dctx {
            self.check_window(w)?;
        }
        let batch = batch_size.unwrap_or(dctx.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        for (m, head) in self.heads.iter().enumerate() {
            let pairs: Vec<(DVector<f64>, DVector<f64>)> = dctx
                .iter()
                .map(|w| {
                    (
                        DVector::from_iterator(self.lookback, w.history.column(m).iter().cloned()),
                        DVector::from_iterator(self.horizon, w.future.column(m).iter().cloned()),
                    )
                })
                .collect();
            heads.push(sgd_epoch(head, &pairs, lr, batch)?);
        }
        Ok(Box::new(Self {
            heads,
            lookback: self.lookback,
            horizon: self.horizon,
        }))
    }
}
