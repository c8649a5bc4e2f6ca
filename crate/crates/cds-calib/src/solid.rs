//! Per-test-sample adaptation: pick preceding windows that share the test
//! sample's context (close in time, same periodic phase, similar history),
//! fine-tune a cloned prediction head on them for one epoch, forecast, discard.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::forecaster::Forecaster;
use crate::metrics::sample_mse;

/// Selection and adaptation hyperparameters, one set per run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolidParams {
    /// How far back candidates may reach: t′ ≥ t − λ_T (time steps).
    pub lambda_t: usize,
    /// Phase-difference threshold as a fraction of the period, in (0, 1].
    pub lambda_p: f64,
    /// How many most-similar candidates to keep.
    pub lambda_n: usize,
    /// Adaptation learning rate. Zero is allowed and makes adaptation a no-op.
    pub lr: f64,
    /// Dominant period used for the phase test.
    pub t_star: usize,
    /// Measure phase distance around the circle (min(d, 1−d)) instead of the
    /// plain absolute difference. Off by default.
    pub circular_phase: bool,
    /// Mini-batch size for the adaptation epoch; `None` = one full batch.
    pub batch_size: Option<usize>,
}

impl SolidParams {
    /// `horizon` is the model's T; λ_T below it leaves no room for any
    /// candidate because selection requires t′ + T ≤ t.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.lambda_p > 0.0 && self.lambda_p <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambda_p",
                reason: format!("must lie in (0, 1], got {}", self.lambda_p),
            });
        }
        if self.lambda_n == 0 {
            return Err(Error::InvalidParameter {
                name: "lambda_n",
                reason: "must keep at least one sample".into(),
            });
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "lr",
                reason: format!("must be a finite nonnegative real, got {}", self.lr),
            });
        }
        if self.t_star == 0 {
            return Err(Error::InvalidParameter {
                name: "t_star",
                reason: "period must be at least 1".into(),
            });
        }
        if self.lambda_t < horizon {
            return Err(Error::InvalidParameter {
                name: "lambda_t",
                reason: format!(
                    "{} is below the horizon {horizon}; no candidate could satisfy t′ + T ≤ t",
                    self.lambda_t
                ),
            });
        }
        if let Some(0) = self.batch_size {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// What to do when adaptation blows up numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackPolicy {
    /// Serve the unadapted base forecast and flag the sample.
    #[default]
    Base,
    /// Surface the error to the caller.
    Error,
}

/// Fractional phase distance between two anchors: |(t mod T*) − (t′ mod T*)|/T*,
/// optionally wrapped around the circle.
pub fn phase_distance(t: i64, t_prime: i64, t_star: usize, circular: bool) -> f64 {
    let ts = t_star as i64;
    let d = (t.rem_euclid(ts) - t_prime.rem_euclid(ts)).abs() as f64 / t_star as f64;
    if circular {
        d.min(1.0 - d)
    } else {
        d
    }
}

/// All anchors t′ from `available` (sorted ascending) with
/// t − λ_T ≤ t′ ≤ t − T and phase distance below λ_P, in ascending order.
/// May be empty; emptiness is the caller's fallback signal.
pub fn candidate_anchors(
    t: i64,
    available: &[i64],
    horizon: usize,
    params: &SolidParams,
) -> Vec<i64> {
    let lo = t - params.lambda_t as i64;
    let hi = t - horizon as i64;
    if lo > hi {
        return Vec::new();
    }
    let start = available.partition_point(|&a| a < lo);
    let end = available.partition_point(|&a| a <= hi);
    available[start..end]
        .iter()
        .copied()
        .filter(|&tp| phase_distance(t, tp, params.t_star, params.circular_phase) < params.lambda_p)
        .collect()
}

/// The selected context set D_ctx: window references ranked by ascending
/// Euclidean distance between flattened histories (ties favor the more recent
/// anchor), truncated to λ_N.
#[derive(Debug, Clone)]
pub struct ContextualizedDataset<'a> {
    samples: Vec<&'a WindowSample>,
    distances: Vec<f64>,
}

impl<'a> ContextualizedDataset<'a> {
    pub fn samples(&self) -> &[&'a WindowSample] {
        &self.samples
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn anchors(&self) -> Vec<i64> {
        self.samples.iter().map(|w| w.anchor_t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Ranks `candidates` (anchors into `pool`, which is sorted by anchor) by
/// similarity to `test_history` and keeps the top λ_N.
pub fn select_contextualized<'a>(
    pool: &'a [WindowSample],
    candidates: &[i64],
    test_history: &DMatrix<f64>,
    lambda_n: usize,
) -> Result<ContextualizedDataset<'a>> {
    let mut ranked: Vec<(f64, &WindowSample)> = Vec::with_capacity(candidates.len());
    for &anchor in candidates {
        let idx = pool
            .binary_search_by_key(&anchor, |w| w.anchor_t)
            .map_err(|_| Error::AnchorNotCovered { anchor })?;
        let w = &pool[idx];
        if w.history.shape() != test_history.shape() {
            return Err(Error::ShapeMismatch(format!(
                "candidate history {}×{} vs test history {}×{}",
                w.history.nrows(),
                w.history.ncols(),
                test_history.nrows(),
                test_history.ncols()
            )));
        }
        ranked.push(((&w.history - test_history).norm(), w));
    }
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(b.1.anchor_t.cmp(&a.1.anchor_t))
    });
    ranked.truncate(lambda_n);
    let (distances, samples) = ranked.into_iter().map(|(d, w)| (d, w)).unzip();
    Ok(ContextualizedDataset { samples, distances })
}

/// What happened while adapting one test sample.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptationTrace {
    pub anchor_t: i64,
    pub n_candidates: usize,
    pub selected_anchors: Vec<i64>,
    /// True when the base forecast was served: either D_ctx was empty or the
    /// update went non-finite under [`FallbackPolicy::Base`] (the latter is
    /// distinguishable by `selected_anchors` being nonempty).
    pub fallback: bool,
    /// Gradient steps taken: ⌈|D_ctx| / batch⌉, zero on empty D_ctx.
    pub steps: usize,
    /// Mean squared error of the base head on D_ctx, when D_ctx is nonempty.
    pub pre_loss: Option<f64>,
    /// Same after adaptation; absent when the update was discarded.
    pub post_loss: Option<f64>,
}

fn dctx_loss(model: &dyn Forecaster, dctx: &ContextualizedDataset) -> Result<f64> {
    let mut total = 0.0;
    for w in dctx.samples() {
        total += sample_mse(&model.forecast_window(w)?, &w.future)?;
    }
    Ok(total / dctx.len() as f64)
}

/// Adapts a cloned head on D_ctx (one epoch) and forecasts `test_window`.
/// Empty D_ctx serves the base forecast with `fallback = true`; a non-finite
/// update either falls back or errors, per `policy`. The base model is never
/// modified.
pub fn adapt_and_predict(
    base: &dyn Forecaster,
    test_window: &WindowSample,
    dctx: &ContextualizedDataset,
    params: &SolidParams,
    policy: FallbackPolicy,
) -> Result<(DMatrix<f64>, AdaptationTrace)> {
    let mut trace = AdaptationTrace {
        anchor_t: test_window.anchor_t,
        n_candidates: 0,
        selected_anchors: dctx.anchors(),
        fallback: false,
        steps: 0,
        pre_loss: None,
        post_loss: None,
    };
    debug_assert!(
        trace
            .selected_anchors
            .iter()
            .all(|&tp| tp + base.horizon() as i64 <= test_window.anchor_t),
        "selected anchor leaks future data"
    );
    if dctx.is_empty() {
        trace.fallback = true;
        return Ok((base.forecast_window(test_window)?, trace));
    }
    let batch = params.batch_size.unwrap_or(dctx.len()).min(dctx.len());
    trace.steps = dctx.len().div_ceil(batch);
    trace.pre_loss = Some(dctx_loss(base, dctx)?);
    let adapted = match base.fine_tuned(dctx.samples(), params.lr, Some(batch)) {
        Ok(model) => model,
        Err(Error::NonFiniteUpdate(what)) => match policy {
            FallbackPolicy::Base => {
                trace.fallback = true;
                trace.steps = 0;
                return Ok((base.forecast_window(test_window)?, trace));
            }
            FallbackPolicy::Error => return Err(Error::NonFiniteUpdate(what)),
        },
        Err(other) => return Err(other),
    };
    let forecast = adapted.forecast_window(test_window)?;
    if !forecast.iter().all(|v| v.is_finite()) {
        return match policy {
            FallbackPolicy::Base => {
                trace.fallback = true;
                trace.steps = 0;
                Ok((base.forecast_window(test_window)?, trace))
            }
            FallbackPolicy::Error => Err(Error::NonFiniteUpdate("adapted forecast is non-finite")),
        };
    }
    trace.post_loss = Some(dctx_loss(adapted.as_ref(), dctx)?);
    Ok((forecast, trace))
}

/// Per-sample result of a full adaptation run.
#[derive(Debug, Clone)]
pub struct SolidOutcome {
    pub anchor_t: i64,
    pub base_mse: f64,
    pub adapted_mse: f64,
    pub forecast: DMatrix<f64>,
    pub trace: AdaptationTrace,
}

/// Aggregate of [`run_solid`]: metrics are `None` when there were no test
/// samples to score.
#[derive(Debug, Clone)]
pub struct SolidRun {
    pub outcomes: Vec<SolidOutcome>,
    pub base_mse: Option<f64>,
    pub base_mae: Option<f64>,
    pub adapted_mse: Option<f64>,
    pub adapted_mae: Option<f64>,
    pub fallback_count: usize,
}

/// Adapts every test window independently against `pool` (train ∪ val windows,
/// plus — when the caller includes them — already-revealed test windows; the
/// t′ + T ≤ t constraint keeps the rolling pool causal automatically). `pool`
/// must be sorted by strictly increasing anchor.
pub fn run_solid(
    base: &dyn Forecaster,
    test_windows: &[WindowSample],
    pool: &[WindowSample],
    params: &SolidParams,
    policy: FallbackPolicy,
) -> Result<SolidRun> {
    params.validate(base.horizon())?;
    if pool.windows(2).any(|p| p[0].anchor_t >= p[1].anchor_t) {
        return Err(Error::InvalidParameter {
            name: "pool",
            reason: "windows must be sorted by strictly increasing anchor".into(),
        });
    }
    let anchors: Vec<i64> = pool.iter().map(|w| w.anchor_t).collect();
    let mut outcomes = Vec::with_capacity(test_windows.len());
    let mut accum = MetricAccumulator::default();
    let mut fallback_count = 0usize;
    for w in test_windows {
        let candidates = candidate_anchors(w.anchor_t, &anchors, base.horizon(), params);
        let dctx = select_contextualized(pool, &candidates, &w.history, params.lambda_n)?;
        let (forecast, mut trace) = adapt_and_predict(base, w, &dctx, params, policy)?;
        trace.n_candidates = candidates.len();
        let base_forecast = base.forecast_window(w)?;
        accum.push(&base_forecast, &forecast, &w.future);
        fallback_count += trace.fallback as usize;
        outcomes.push(SolidOutcome {
            anchor_t: w.anchor_t,
            base_mse: sample_mse(&base_forecast, &w.future)?,
            adapted_mse: sample_mse(&forecast, &w.future)?,
            forecast,
            trace,
        });
    }
    let (base_mse, base_mae, adapted_mse, adapted_mae) = accum.finish();
    Ok(SolidRun {
        outcomes,
        base_mse,
        base_mae,
        adapted_mse,
        adapted_mae,
        fallback_count,
    })
}

/// Pools squared/absolute errors over every forecast entry, base and adapted.
#[derive(Default)]
struct MetricAccumulator {
    entries: usize,
    base_sq: f64,
    base_abs: f64,
    adapted_sq: f64,
    adapted_abs: f64,
}

impl MetricAccumulator {
    fn push(&mut self, base: &DMatrix<f64>, adapted: &DMatrix<f64>, truth: &DMatrix<f64>) {
        self.entries += truth.len();
        for ((b, a), t) in base.iter().zip(adapted.iter()).zip(truth.iter()) {
            self.base_sq += (b - t) * (b - t);
            self.base_abs += (b - t).abs();
            self.adapted_sq += (a - t) * (a - t);
            self.adapted_abs += (a - t).abs();
        }
    }

    #[allow(clippy::type_complexity)]
    fn finish(self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        if self.entries == 0 {
            return (None, None, None, None);
        }
        let n = self.entries as f64;
        (
            Some(self.base_sq / n),
            Some(self.base_abs / n),
            Some(self.adapted_sq / n),
            Some(self.adapted_abs / n),
        )
    }
}
