//! Residual-based detector for context-driven distribution shift: scores a
//! trained model by the mutual information between its residuals and an
//! observed context variable, under per-context Gaussian approximations.
//!
//! The score is δ = Σ_c (n_c/n)·KL(N(μ_c, σ_c²) ‖ N(μ, σ²)): how far each
//! context's residual population sits from the pooled marginal, weighted by
//! context mass. Independent residuals give δ → 0; a model that is blind to a
//! context that matters leaves a per-context signature and δ grows.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::forecaster::Forecaster;

/// Standard deviations are clamped below by this before entering any KL term.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Classification threshold on log10 δ_P: at or above means "strong CDS".
pub const STRONG_CDS_LOG10_THRESHOLD: f64 = -3.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContextKind {
    PeriodicPhase,
    TemporalSegment,
    Custom,
}

/// Maps each anchor (by position) to a context label in `[0, num_contexts)`.
#[derive(Debug, Clone)]
pub struct ContextAssignment {
    pub kind: ContextKind,
    num_contexts: usize,
    labels: Vec<usize>,
}

impl ContextAssignment {
    pub fn new(kind: ContextKind, num_contexts: usize, labels: Vec<usize>) -> Result<Self> {
        if num_contexts == 0 {
            return Err(Error::InvalidParameter {
                name: "num_contexts",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_contexts) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label {bad} out of range for K={num_contexts}"),
            });
        }
        Ok(Self { kind, num_contexts, labels })
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Periodic-phase context: c_t = t mod T*, one context per phase.
pub fn phase_context(anchors: &[i64], t_star: usize) -> Result<ContextAssignment> {
    if t_star == 0 {
        return Err(Error::InvalidParameter {
            name: "t_star",
            reason: "period must be at least 1".into(),
        });
    }
    let labels = anchors
        .iter()
        .map(|&t| t.rem_euclid(t_star as i64) as usize)
        .collect();
    ContextAssignment::new(ContextKind::PeriodicPhase, t_star, labels)
}

/// Temporal-segment context: anchors split by position into `num_segments`
/// contiguous blocks of floor(n/k) anchors, remainder going to the last block.
pub fn segment_context(anchors: &[i64], num_segments: usize) -> Result<ContextAssignment> {
    if num_segments == 0 {
        return Err(Error::InvalidParameter {
            name: "num_segments",
            reason: "must be at least 1".into(),
        });
    }
    if anchors.is_empty() {
        return Err(Error::EmptyInput("segment_context over no anchors"));
    }
    let n = anchors.len();
    let base = n / num_segments;
    let labels = (0..n)
        .map(|i| {
            if base == 0 {
                num_segments - 1
            } else {
                (i / base).min(num_segments - 1)
            }
        })
        .collect();
    ContextAssignment::new(ContextKind::TemporalSegment, num_segments, labels)
}

/// Moments of a residual population under the Gaussian reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianSummary {
    pub mean: f64,
    /// Population standard deviation (÷n), clamped to [`SIGMA_FLOOR`].
    pub std: f64,
    pub count: usize,
}

impl GaussianSummary {
    pub fn fit(samples: &[f64]) -> Result<Self> {
        let mut acc = MomentAccumulator::default();
        for &x in samples {
            acc.push(x);
        }
        acc.summary()
            .ok_or(Error::EmptyInput("cannot fit a Gaussian to no samples"))
    }
}

/// Welford's online moments: immune to the cancellation that the naive
/// E[x²]−μ² route suffers when means dwarf spreads.
#[derive(Debug, Clone, Copy, Default)]
struct MomentAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn summary(&self) -> Option<GaussianSummary> {
        (self.count >= 1).then(|| GaussianSummary {
            mean: self.mean,
            std: (self.m2 / self.count as f64).sqrt().max(SIGMA_FLOOR),
            count: self.count,
        })
    }
}

/// KL(N(μ_p, σ_p²) ‖ N(μ_q, σ_q²)) = ln(σ_q/σ_p) + (σ_p² + (μ_p−μ_q)²)/(2σ_q²) − ½.
pub fn kl_gaussian(p: &GaussianSummary, q: &GaussianSummary) -> f64 {
    let sp = p.std.max(SIGMA_FLOOR);
    let sq = q.std.max(SIGMA_FLOOR);
    let mean_gap = p.mean - q.mean;
    (sq / sp).ln() + (sp * sp + mean_gap * mean_gap) / (2.0 * sq * sq) - 0.5
}

/// One participating context's contribution to δ.
#[derive(Debug, Clone, Serialize)]
pub struct ContextTerm {
    pub context: usize,
    pub summary: GaussianSummary,
    /// n_c over the participating-entry total; participating weights sum to 1.
    pub weight: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorReport {
    pub kind: ContextKind,
    pub num_contexts: usize,
    pub delta: f64,
    /// −∞ when δ is exactly 0.
    pub log10_delta: f64,
    pub per_context: Vec<ContextTerm>,
    pub marginal: GaussianSummary,
    /// Context ids excluded for having fewer than 2 residual entries.
    pub dropped_contexts: Vec<usize>,
}

impl DetectorReport {
    pub fn is_strong(&self, log10_threshold: f64) -> bool {
        self.log10_delta >= log10_threshold
    }
}

/// Per-window residual matrices, sign convention prediction − truth.
pub fn residual_matrices(
    model: &dyn Forecaster,
    windows: &[WindowSample],
) -> Result<Vec<DMatrix<f64>>> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows to compute residuals over"));
    }
    windows
        .iter()
        .map(|w| Ok(model.forecast_window(w)? - &w.future))
        .collect()
}

/// The pooled scalar residual population: per window, the T×M residual matrix
/// flattened row by row.
pub fn residual_population(
    model: &dyn Forecaster,
    windows: &[WindowSample],
) -> Result<Vec<(i64, Vec<f64>)>> {
    let residuals = residual_matrices(model, windows)?;
    Ok(windows
        .iter()
        .zip(&residuals)
        .map(|(w, r)| {
            let (t, m) = r.shape();
            let flat = (0..t * m).map(|i| r[(i / m, i % m)]).collect();
            (w.anchor_t, flat)
        })
        .collect())
}

/// Scores a model against a context: residuals on `windows`, then
/// [`score_from_residuals`].
pub fn reconditionor_score(
    model: &dyn Forecaster,
    windows: &[WindowSample],
    context: &ContextAssignment,
) -> Result<DetectorReport> {
    let residuals = residual_matrices(model, windows)?;
    score_from_residuals(&residuals, context)
}

/// Computes δ from precomputed per-window residual matrices. Each window's
/// entries inherit the window's context label. Contexts with fewer than two
/// entries are dropped (not fatal) and the remaining weights renormalized; if
/// every context drops, the population cannot support the score.
pub fn score_from_residuals(
    residuals: &[DMatrix<f64>],
    context: &ContextAssignment,
) -> Result<DetectorReport> {
    score_filtered(residuals, context, &|_, _| true)
}

/// δ restricted to a single channel, one value per channel — a diagnostic for
/// locating which series carries the shift. Equal-weight averaging is the
/// caller's business.
pub fn per_channel_deltas(
    model: &dyn Forecaster,
    windows: &[WindowSample],
    context: &ContextAssignment,
) -> Result<Vec<f64>> {
    let residuals = residual_matrices(model, windows)?;
    (0..model.channels())
        .map(|m| Ok(score_filtered(&residuals, context, &|_, col| col == m)?.delta))
        .collect()
}

/// δ restricted to a single horizon step, one value per step ahead.
pub fn per_horizon_deltas(
    model: &dyn Forecaster,
    windows: &[WindowSample],
    context: &ContextAssignment,
) -> Result<Vec<f64>> {
    let residuals = residual_matrices(model, windows)?;
    (0..model.horizon())
        .map(|t| Ok(score_filtered(&residuals, context, &|row, _| row == t)?.delta))
        .collect()
}

fn score_filtered(
    residuals: &[DMatrix<f64>],
    context: &ContextAssignment,
    keep: &dyn Fn(usize, usize) -> bool,
) -> Result<DetectorReport> {
    if residuals.len() != context.labels().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} residual windows vs {} context labels",
            residuals.len(),
            context.labels().len()
        )));
    }
    let k = context.num_contexts();
    let mut per_context = vec![MomentAccumulator::default(); k];
    let mut marginal_acc = MomentAccumulator::default();
    for (r, &label) in residuals.iter().zip(context.labels()) {
        for row in 0..r.nrows() {
            for col in 0..r.ncols() {
                if keep(row, col) {
                    let x = r[(row, col)];
                    per_context[label].push(x);
                    marginal_acc.push(x);
                }
            }
        }
    }
    if marginal_acc.count < 2 {
        return Err(Error::InsufficientData(format!(
            "{} residual entries in total, need at least 2",
            marginal_acc.count
        )));
    }
    let marginal = marginal_acc.summary().expect("count checked above");

    let mut dropped = Vec::new();
    let mut participating = Vec::new();
    let mut participating_entries = 0usize;
    for (c, acc) in per_context.iter().enumerate() {
        if acc.count < 2 {
            dropped.push(c);
        } else {
            participating.push((c, acc.summary().expect("count ≥ 2")));
            participating_entries += acc.count;
        }
    }
    if participating.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {k} contexts have fewer than 2 residual entries"
        )));
    }

    let mut delta = 0.0;
    let terms: Vec<ContextTerm> = participating
        .into_iter()
        .map(|(c, summary)| {
            let weight = summary.count as f64 / participating_entries as f64;
            let kl = kl_gaussian(&summary, &marginal);
            delta += weight * kl;
            ContextTerm { context: c, summary, weight, kl }
        })
        .collect();
    debug_assert!(delta >= -1e-12, "δ must be nonnegative up to rounding, got {delta}");
    let delta = delta.max(0.0);
    Ok(DetectorReport {
        kind: context.kind,
        num_contexts: k,
        delta,
        log10_delta: delta.log10(),
        per_context: terms,
        marginal,
        dropped_contexts: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::Forecaster;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// A model that forecasts the same matrix for every window.
    #[derive(Clone)]
    struct ConstantModel(DMatrix<f64>);

    impl Forecaster for ConstantModel {
        fn name(&self) -> &str {
            "constant"
        }
        fn horizon(&self) -> usize {
            self.0.nrows()
        }
        fn channels(&self) -> usize {
            self.0.ncols()
        }
        fn forecast_window(&self, _w: &WindowSample) -> Result<DMatrix<f64>> {
            Ok(self.0.clone())
        }
        fn fine_tuned(
            &self,
            _dctx: &[&WindowSample],
            _lr: f64,
            _batch: Option<usize>,
        ) -> Result<Box<dyn Forecaster>> {
            Ok(Box::new(self.clone()))
        }
    }

    fn window(anchor_t: i64, future: DMatrix<f64>) -> WindowSample {
        WindowSample {
            anchor_t,
            history: DMatrix::zeros(1, future.ncols()),
            future,
        }
    }

    /// Adaptive Simpson quadrature of ∫ p·ln(p/q) — the independent check on
    /// the closed-form KL.
    fn kl_by_quadrature(p: &GaussianSummary, q: &GaussianSummary) -> f64 {
        let pdf = |mu: f64, sigma: f64, x: f64| -> f64 {
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let integrand = |x: f64| -> f64 {
            let px = pdf(p.mean, p.std, x);
            if px <= 0.0 {
                0.0
            } else {
                px * (px / pdf(q.mean, q.std, x)).ln()
            }
        };
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
            let mid = 0.5 * (a + b);
            let left = simpson(f, a, mid);
            let right = simpson(f, mid, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                adaptive(f, a, mid, left, eps / 2.0, depth - 1)
                    + adaptive(f, mid, b, right, eps / 2.0, depth - 1)
            }
        }
        // The integrand carries a factor p(x), so all the mass lives within a
        // few σ_p of μ_p; pre-split into panels so narrow bumps cannot hide
        // from the first coarse Simpson estimate.
        let lo = p.mean - 12.0 * p.std;
        let hi = p.mean + 12.0 * p.std;
        let panels = 16;
        (0..panels)
            .map(|i| {
                let a = lo + (hi - lo) * i as f64 / panels as f64;
                let b = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
                adaptive(&integrand, a, b, simpson(&integrand, a, b), 1e-10 / panels as f64, 40)
            })
            .sum()
    }

    #[test]
    fn phase_context_is_anchor_mod_period() {
        let anchors: Vec<i64> = (0..48).collect();
        let ctx = phase_context(&anchors, 24).unwrap();
        assert_eq!(ctx.num_contexts(), 24);
        let expected: Vec<usize> = (0..48).map(|t| t % 24).collect();
        assert_eq!(ctx.labels(), &expected[..]);

        let trivial = phase_context(&anchors, 1).unwrap();
        assert!(trivial.labels().iter().all(|&l| l == 0));
        assert_eq!(trivial.num_contexts(), 1);
    }

    #[test]
    fn segment_context_floor_sizes_remainder_last() {
        let anchors: Vec<i64> = (0..10).collect();
        let ctx = segment_context(&anchors, 5).unwrap();
        let sizes = |ctx: &ContextAssignment, k: usize| -> Vec<usize> {
            (0..k).map(|c| ctx.labels().iter().filter(|&&l| l == c).count()).collect()
        };
        assert_eq!(sizes(&ctx, 5), vec![2, 2, 2, 2, 2]);

        let anchors11: Vec<i64> = (0..11).collect();
        let ctx11 = segment_context(&anchors11, 5).unwrap();
        assert_eq!(sizes(&ctx11, 5), vec![2, 2, 2, 2, 3]);
        // Labels are monotone: segments are contiguous blocks.
        assert!(ctx11.labels().windows(2).all(|w| w[0] <= w[1]));

        let one = segment_context(&anchors11, 1).unwrap();
        assert!(one.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn kl_frozen_values_and_quadrature_agreement() {
        let n = |mean: f64, std: f64| GaussianSummary { mean, std, count: 1 };
        assert_eq!(kl_gaussian(&n(0.3, 1.7), &n(0.3, 1.7)), 0.0);
        assert_abs_diff_eq!(kl_gaussian(&n(1.0, 1.0), &n(0.0, 1.0)), 0.5, epsilon = 1e-15);
        // ln(1/2) + 4/2 − 1/2 = 0.8068528194400547
        let wide = kl_gaussian(&n(0.0, 2.0), &n(0.0, 1.0));
        assert_abs_diff_eq!(wide, 0.5f64.ln() + 2.0 - 0.5, epsilon = 1e-15);
        for (p, q) in [
            (n(1.0, 1.0), n(0.0, 1.0)),
            (n(0.0, 2.0), n(0.0, 1.0)),
            (n(-2.5, 0.3), n(1.0, 2.0)),
        ] {
            assert_abs_diff_eq!(kl_gaussian(&p, &q), kl_by_quadrature(&p, &q), epsilon = 1e-6);
        }
    }

    #[test]
    fn residual_sign_and_flatten_order() {
        let truth = DMatrix::zeros(2, 2);
        let pred = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let model = ConstantModel(pred);
        let pop = residual_population(&model, &[window(7, truth)]).unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop[0].0, 7);
        assert_eq!(pop[0].1, vec![1.0, 2.0, 3.0, 4.0], "row-major flatten");

        let ones = DMatrix::from_element(2, 2, 1.0);
        let zero_model = ConstantModel(DMatrix::zeros(2, 2));
        let pop = residual_population(&zero_model, &[window(0, ones)]).unwrap();
        assert!(pop[0].1.iter().all(|&r| r == -1.0), "prediction − truth");
    }

    #[test]
    fn independent_residuals_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 4;
        let per_context = 10_000usize;
        let mut residuals = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            for _ in 0..per_context {
                residuals.push(DMatrix::from_element(1, 1, rng.sample::<f64, _>(StandardNormal)));
                labels.push(c);
            }
        }
        let ctx = ContextAssignment::new(ContextKind::Custom, k, labels).unwrap();
        let report = score_from_residuals(&residuals, &ctx).unwrap();
        assert!(
            report.delta < 1e-2,
            "independent context must score near zero, got {}",
            report.delta
        );
        assert!(report.delta >= 0.0);
    }

    #[test]
    fn separated_context_means_dominate_the_score() {
        // Two contexts at ±1 with jitter exactly ±1e−3: per-context moments are
        // μ_c = ±1, σ_c = 1e−3; marginal is μ = 0, σ = √(1+1e−6). Each KL term is
        //   ln(σ/σ_c) + (σ_c² + 1)/(2σ²) − ½ = ln(σ/1e−3) + ½ − ½,
        // so δ = ln(√(1+1e−6)/1e−3) exactly.
        let jitter = 1e-3;
        let mut residuals = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [(0usize, 1.0), (1, -1.0)] {
            for i in 0..1000 {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                residuals.push(DMatrix::from_element(1, 1, center + sign * jitter));
                labels.push(c);
            }
        }
        let ctx = ContextAssignment::new(ContextKind::Custom, 2, labels.clone()).unwrap();
        let report = score_from_residuals(&residuals, &ctx).unwrap();
        let marginal_std = (1.0 + jitter * jitter).sqrt();
        let expected = (marginal_std / jitter).ln();
        assert_abs_diff_eq!(report.delta, expected, epsilon = 1e-9);
        assert!(report.delta > 1.0);

        // And it dwarfs an independent population of the same size.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let iid: Vec<DMatrix<f64>> = (0..2000)
            .map(|_| DMatrix::from_element(1, 1, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let iid_ctx = ContextAssignment::new(ContextKind::Custom, 2, labels).unwrap();
        let iid_delta = score_from_residuals(&iid, &iid_ctx).unwrap().delta;
        assert!(
            report.delta > 100.0 * iid_delta,
            "separated {} vs iid {}",
            report.delta,
            iid_delta
        );
    }

    #[test]
    fn report_internal_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let residuals: Vec<DMatrix<f64>> = (0..300)
            .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let ctx = ContextAssignment::new(ContextKind::Custom, 3, labels).unwrap();
        let report = score_from_residuals(&residuals, &ctx).unwrap();
        let weight_sum: f64 = report.per_context.iter().map(|t| t.weight).sum();
        assert_abs_diff_eq!(weight_sum, 1.0, epsilon = 1e-9);
        let recomputed: f64 = report.per_context.iter().map(|t| t.weight * t.kl).sum();
        assert_abs_diff_eq!(report.delta, recomputed.max(0.0), epsilon = 1e-12);
        assert_eq!(report.marginal.count, 1200);
    }

    #[test]
    fn sparse_contexts_drop_and_weights_renormalize() {
        let residuals = vec![
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::from_element(1, 1, -0.2),
            DMatrix::from_element(1, 1, 0.3),
            DMatrix::from_element(1, 1, 0.4),
            // context 2 gets a single entry and must be dropped
            DMatrix::from_element(1, 1, 9.0),
        ];
        let labels = vec![0, 0, 1, 1, 2];
        let ctx = ContextAssignment::new(ContextKind::Custom, 4, labels).unwrap();
        let report = score_from_residuals(&residuals, &ctx).unwrap();
        assert_eq!(report.dropped_contexts, vec![2, 3], "singleton and empty contexts drop");
        let weight_sum: f64 = report.per_context.iter().map(|t| t.weight).sum();
        assert_abs_diff_eq!(weight_sum, 1.0, epsilon = 1e-9);
        // The dropped entry still shapes the marginal.
        assert_eq!(report.marginal.count, 5);

        let all_single = vec![DMatrix::from_element(1, 1, 0.0); 3];
        let ctx = ContextAssignment::new(ContextKind::Custom, 3, vec![0, 1, 2]).unwrap();
        assert!(matches!(
            score_from_residuals(&all_single, &ctx),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn channel_diagnostic_localizes_the_shift() {
        // Channel 0 residuals depend on the context, channel 1's never do.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut residuals = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            let shifted = if c == 0 { 2.0 } else { -2.0 };
            let noise: f64 = rng.sample(StandardNormal);
            residuals.push(DMatrix::from_row_slice(
                1,
                2,
                &[shifted + 0.1 * noise, noise],
            ));
            labels.push(c);
        }
        let ctx = ContextAssignment::new(ContextKind::Custom, 2, labels).unwrap();
        let model = ConstantModel(DMatrix::zeros(1, 2));
        let windows: Vec<WindowSample> = residuals
            .iter()
            .map(|r| window(0, -r.clone()))
            .collect();
        let per_channel = per_channel_deltas(&model, &windows, &ctx).unwrap();
        assert_eq!(per_channel.len(), 2);
        assert!(
            per_channel[0] > 100.0 * per_channel[1],
            "shifted channel {} vs clean channel {}",
            per_channel[0],
            per_channel[1]
        );
        let per_horizon = per_horizon_deltas(&model, &windows, &ctx).unwrap();
        assert_eq!(per_horizon.len(), 1);
    }

    #[test]
    fn strong_classification_threshold() {
        let mk = |delta: f64| DetectorReport {
            kind: ContextKind::PeriodicPhase,
            num_contexts: 24,
            delta,
            log10_delta: delta.log10(),
            per_context: vec![],
            marginal: GaussianSummary { mean: 0.0, std: 1.0, count: 10 },
            dropped_contexts: vec![],
        };
        assert!(mk(1e-3).is_strong(STRONG_CDS_LOG10_THRESHOLD));
        assert!(!mk(1e-4).is_strong(STRONG_CDS_LOG10_THRESHOLD));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// δ is invariant under relabeling contexts, shifting all residuals by
        /// a constant, and scaling them by a positive factor.
        #[test]
        fn delta_invariances(seed in 0u64..1000, shift in -10.0f64..10.0, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 3;
            let residuals: Vec<DMatrix<f64>> = (0..120)
                .map(|i| DMatrix::from_fn(2, 1, |_, _| {
                    let base: f64 = rng.sample(StandardNormal);
                    base + 0.5 * (i % k) as f64
                }))
                .collect();
            let labels: Vec<usize> = (0..120).map(|i| i % k).collect();
            let ctx = ContextAssignment::new(ContextKind::Custom, k, labels.clone()).unwrap();
            let delta = score_from_residuals(&residuals, &ctx).unwrap().delta;

            let relabeled: Vec<usize> = labels.iter().map(|&l| (l + 1) % k).collect();
            let ctx2 = ContextAssignment::new(ContextKind::Custom, k, relabeled).unwrap();
            let delta_relabel = score_from_residuals(&residuals, &ctx2).unwrap().delta;
            prop_assert!((delta - delta_relabel).abs() < 1e-10);

            let transformed: Vec<DMatrix<f64>> =
                residuals.iter().map(|r| r.map(|x| scale * x + shift)).collect();
            let delta_affine = score_from_residuals(&transformed, &ctx).unwrap().delta;
            prop_assert!(
                (delta - delta_affine).abs() < 1e-8,
                "affine map changed δ: {} vs {}", delta, delta_affine
            );
        }

        /// Merging two contexts with identical populations never increases δ.
        #[test]
        fn merging_identical_contexts_never_increases_delta(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Contexts 0 and 1 share a generating distribution; context 2 differs.
            let mut residuals = Vec::new();
            let mut split_labels = Vec::new();
            for i in 0..240 {
                let c = i % 3;
                let mean = if c == 2 { 1.5 } else { 0.0 };
                let x: f64 = rng.sample(StandardNormal);
                residuals.push(DMatrix::from_element(1, 1, mean + x));
                split_labels.push(c);
            }
            let merged_labels: Vec<usize> =
                split_labels.iter().map(|&l| if l == 1 { 0 } else { l }).collect();
            let split_ctx = ContextAssignment::new(ContextKind::Custom, 3, split_labels).unwrap();
            let merged_ctx = ContextAssignment::new(ContextKind::Custom, 3, merged_labels).unwrap();
            let split = score_from_residuals(&residuals, &split_ctx).unwrap().delta;
            let merged = score_from_residuals(&residuals, &merged_ctx).unwrap().delta;
            prop_assert!(merged <= split + 1e-10, "merged {} > split {}", merged, split);
        }
    }
}
