//! End-to-end experiment orchestration: load a CSV, split and standardize,
//! fit the linear baseline (or bind an exported latent dataset), detect the
//! dominant period, score δ_P and δ_T on training residuals, grid-search the
//! adaptation hyperparameters on validation MSE, adapt every test sample, and
//! emit the artifact files.
//!
//! `report.json` is byte-identical for identical config + seed; wall-clock
//! measurements live in a separate `timing.json` so they cannot break that.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{make_windows, read_csv, SplitSpec, Standardizer, WindowSample};
use crate::error::{Error, Result};
use crate::forecaster::{Forecaster, LinearForecaster};
use crate::latent::{LatentDataset, LatentForecaster};
use crate::metrics::improvement_percent;
use crate::periodicity::dominant_period;
use crate::reconditionor::{
    per_channel_deltas, phase_context, residual_matrices, score_from_residuals, segment_context,
    DetectorReport, STRONG_CDS_LOG10_THRESHOLD,
};
use crate::solid::{run_solid, FallbackPolicy, SolidParams, SolidRun};

fn default_lookback() -> usize {
    336
}
fn default_horizon() -> usize {
    96
}
fn default_train_ratio() -> f64 {
    0.6
}
fn default_val_ratio() -> f64 {
    0.2
}
fn default_test_ratio() -> f64 {
    0.2
}
fn default_threshold() -> f64 {
    STRONG_CDS_LOG10_THRESHOLD
}
fn default_segments() -> usize {
    5
}
fn default_ridge() -> f64 {
    1e-4
}
fn default_train_lr() -> f64 {
    1e-4
}
fn default_lambda_t_grid() -> Vec<usize> {
    vec![500, 1000, 2000]
}
fn default_lambda_p_grid() -> Vec<f64> {
    vec![0.02, 0.05, 0.1]
}
fn default_lambda_n_grid() -> Vec<usize> {
    vec![5, 10, 20]
}
fn default_lr_ratio_grid() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 50.0]
}

/// Everything one experiment needs, readable from a flat TOML file. Every key
/// has a default (grid defaults are the hourly-data search space; weekly data
/// like the illness benchmark wants the smaller ranges from its config file),
/// and every key can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV with a header row and an optional leading timestamp column.
    pub dataset: PathBuf,
    /// Optional exported-feature file; when set, forecasts come from a head
    /// fitted on these features instead of the raw-history linear baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latents: Option<PathBuf>,
    pub lookback: usize,
    pub horizon: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    /// log10 δ above which a shift counts as strong.
    pub threshold: f64,
    /// Number of equal temporal segments for δ_T.
    pub segments: usize,
    /// Fixed period; detected from the train split when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    pub ridge: f64,
    /// Nominal training-stage learning rate; adaptation uses lr_ratio × this.
    pub train_lr: f64,
    pub lambda_t_grid: Vec<usize>,
    pub lambda_p_grid: Vec<f64>,
    pub lambda_n_grid: Vec<usize>,
    pub lr_ratio_grid: Vec<f64>,
    pub seed: u64,
    /// Wrap phase distance around the period boundary.
    pub circular_phase: bool,
    /// Fine-tuning minibatch size; full batch when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub fallback_policy: FallbackPolicy,
    /// Restrict the candidate pool to train-split windows (default keeps all
    /// preceding windows eligible; causality is enforced per sample anyway).
    pub train_only_pool: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            latents: None,
            lookback: default_lookback(),
            horizon: default_horizon(),
            train_ratio: default_train_ratio(),
            val_ratio: default_val_ratio(),
            test_ratio: default_test_ratio(),
            threshold: default_threshold(),
            segments: default_segments(),
            period: None,
            ridge: default_ridge(),
            train_lr: default_train_lr(),
            lambda_t_grid: default_lambda_t_grid(),
            lambda_p_grid: default_lambda_p_grid(),
            lambda_n_grid: default_lambda_n_grid(),
            lr_ratio_grid: default_lr_ratio_grid(),
            seed: 0,
            circular_phase: false,
            batch_size: None,
            fallback_policy: FallbackPolicy::default(),
            train_only_pool: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::InvalidParameter {
                name: "dataset",
                reason: "no dataset path given".into(),
            });
        }
        for (name, v) in [("lookback", self.lookback), ("horizon", self.horizon)] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                });
            }
        }
        SplitSpec::new(self.train_ratio, self.val_ratio, self.test_ratio)?;
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParameter {
                name: "threshold",
                reason: format!("must be finite, got {}", self.threshold),
            });
        }
        if self.segments == 0 {
            return Err(Error::InvalidParameter {
                name: "segments",
                reason: "need at least one temporal segment".into(),
            });
        }
        if let Some(p) = self.period {
            if p == 0 {
                return Err(Error::InvalidParameter {
                    name: "period",
                    reason: "must be positive".into(),
                });
            }
        }
        for (name, v) in [("ridge", self.ridge), ("train_lr", self.train_lr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {v}"),
                });
            }
        }
        if self.lambda_t_grid.is_empty() {
            return Err(Error::EmptyGrid("lambda_t_grid"));
        }
        if self.lambda_p_grid.is_empty() {
            return Err(Error::EmptyGrid("lambda_p_grid"));
        }
        if self.lambda_n_grid.is_empty() {
            return Err(Error::EmptyGrid("lambda_n_grid"));
        }
        if self.lr_ratio_grid.is_empty() {
            return Err(Error::EmptyGrid("lr_ratio_grid"));
        }
        if let Some(r) = self.lr_ratio_grid.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "lr_ratio_grid",
                reason: format!("ratios must be finite and nonnegative, got {r}"),
            });
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            locus: "config".into(),
            reason: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format {
            path: "<config>".into(),
            locus: "config serialization".into(),
            reason: e.to_string(),
        })
    }
}

/// Index ranges of the train/val/test windows within a window list sorted by
/// anchor: training futures end by `train_end`, validation anchors start at
/// `train_end` with futures ending by `val_end`, test anchors start at
/// `val_end`. Windows straddling the train/val boundary belong to neither
/// (histories may still cross boundaries; only futures are quarantined).
pub fn partition_ranges(
    windows: &[WindowSample],
    train_end: i64,
    val_end: i64,
) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
    let horizon = windows.first().map_or(0, |w| w.horizon()) as i64;
    let train_hi = windows.partition_point(|w| w.anchor_t + horizon <= train_end);
    let val_lo = windows.partition_point(|w| w.anchor_t < train_end);
    let val_hi = windows
        .partition_point(|w| w.anchor_t + horizon <= val_end)
        .max(val_lo);
    let test_lo = windows.partition_point(|w| w.anchor_t < val_end);
    (0..train_hi, val_lo..val_hi, test_lo..windows.len())
}

/// Slice view of [`partition_ranges`].
pub fn partition_windows(
    windows: &[WindowSample],
    train_end: i64,
    val_end: i64,
) -> (&[WindowSample], &[WindowSample], &[WindowSample]) {
    let (train, val, test) = partition_ranges(windows, train_end, val_end);
    (&windows[train], &windows[val], &windows[test])
}

/// One grid point's validation score. `val_mse` is `None` when the validation
/// split had no windows to score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEvaluation {
    pub lambda_t: usize,
    pub lambda_p: f64,
    pub lambda_n: usize,
    pub lr_ratio: f64,
    pub val_mse: Option<f64>,
}

/// The selected point plus the full evaluation table (order of the Cartesian
/// product: λ_T, then λ_P, λ_N, lr-ratio innermost).
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub params: SolidParams,
    pub lr_ratio: f64,
    pub val_mse: Option<f64>,
    pub evaluations: Vec<GridEvaluation>,
}

/// Lower validation MSE wins; ties prefer the gentlest adaptation — smaller
/// lr-ratio, then smaller λ_N, then larger λ_P, then larger λ_T. A missing
/// score loses to any real one.
fn better_grid_point(candidate: &GridEvaluation, incumbent: &GridEvaluation) -> bool {
    use std::cmp::Ordering;
    let key = |e: &GridEvaluation| e.val_mse.unwrap_or(f64::INFINITY);
    key(candidate)
        .total_cmp(&key(incumbent))
        .then_with(|| candidate.lr_ratio.total_cmp(&incumbent.lr_ratio))
        .then_with(|| candidate.lambda_n.cmp(&incumbent.lambda_n))
        .then_with(|| incumbent.lambda_p.total_cmp(&candidate.lambda_p))
        .then_with(|| incumbent.lambda_t.cmp(&candidate.lambda_t))
        == Ordering::Less
}

/// Exhaustive search over the Cartesian grid, scoring each point by adapted
/// MSE over the validation windows (pool candidates stay causal per sample,
/// so later windows in `pool` are invisible to earlier validation samples).
pub fn grid_search(
    config: &ExperimentConfig,
    model: &dyn Forecaster,
    val_windows: &[WindowSample],
    pool: &[WindowSample],
    t_star: usize,
) -> Result<GridOutcome> {
    config.validate()?;
    let mut evaluations = Vec::with_capacity(
        config.lambda_t_grid.len()
            * config.lambda_p_grid.len()
            * config.lambda_n_grid.len()
            * config.lr_ratio_grid.len(),
    );
    let mut best: Option<(GridEvaluation, SolidParams)> = None;
    for &lambda_t in &config.lambda_t_grid {
        for &lambda_p in &config.lambda_p_grid {
            for &lambda_n in &config.lambda_n_grid {
                for &lr_ratio in &config.lr_ratio_grid {
                    let params = SolidParams {
                        lambda_t,
                        lambda_p,
                        lambda_n,
                        lr: lr_ratio * config.train_lr,
                        t_star,
                        circular_phase: config.circular_phase,
                        batch_size: config.batch_size,
                    };
                    let run =
                        run_solid(model, val_windows, pool, &params, config.fallback_policy)?;
                    let eval = GridEvaluation {
                        lambda_t,
                        lambda_p,
                        lambda_n,
                        lr_ratio,
                        val_mse: run.adapted_mse,
                    };
                    let is_better = match &best {
                        None => true,
                        Some((incumbent, _)) => better_grid_point(&eval, incumbent),
                    };
                    if is_better {
                        best = Some((eval.clone(), params));
                    }
                    evaluations.push(eval);
                }
            }
        }
    }
    let (winner, params) = best.ok_or(Error::EmptyGrid("no grid points to evaluate"))?;
    Ok(GridOutcome {
        params,
        lr_ratio: winner.lr_ratio,
        val_mse: winner.val_mse,
        evaluations,
    })
}

/// MSE/MAE pair; `None` when there was nothing to score. Also reused for the
/// improvement percentages, which are `None` whenever a baseline value is
/// missing or zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub mse: Option<f64>,
    pub mae: Option<f64>,
}

/// Detector result condensed for the report: `log10_delta` is `None` when
/// δ = 0 (JSON has no −∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub delta: f64,
    pub log10_delta: Option<f64>,
    pub num_contexts: usize,
    pub dropped_contexts: usize,
    pub strong: bool,
}

impl DetectorSummary {
    fn from_report(report: &DetectorReport, threshold: f64) -> Self {
        DetectorSummary {
            delta: report.delta,
            log10_delta: (report.delta > 0.0).then(|| report.log10_delta),
            num_contexts: report.num_contexts,
            dropped_contexts: report.dropped_contexts.len(),
            strong: report.is_strong(threshold),
        }
    }
}

/// The grid winner in report form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenParams {
    pub lambda_t: usize,
    pub lambda_p: f64,
    pub lambda_n: usize,
    pub lr_ratio: f64,
    pub lr: f64,
    pub validation_mse: Option<f64>,
}

/// Aggregate experiment result; everything in here is deterministic given the
/// config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub model: String,
    pub num_channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub seed: u64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub t_star: usize,
    pub delta_p: DetectorSummary,
    pub delta_t: DetectorSummary,
    pub chosen: ChosenParams,
    pub baseline: MetricPair,
    pub adapted: MetricPair,
    /// (base − adapted)/base · 100, per metric.
    pub improvement: MetricPair,
    pub fallback_count: usize,
}

/// Wall-clock measurements, kept out of [`ExperimentReport`] on purpose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub load_s: f64,
    pub fit_s: f64,
    pub detect_s: f64,
    pub grid_search_s: f64,
    pub baseline_inference_s: f64,
    pub adaptation_s: f64,
    pub total_s: f64,
    /// Adaptation time over plain inference time — recorded, never asserted.
    pub adaptation_overhead_ratio: Option<f64>,
}

/// Per-channel pairing of detector score and realized improvement, the rows
/// of `detector_vs_improvement.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelDiagnostic {
    pub channel: String,
    pub log10_delta_p: Option<f64>,
    pub mae_improvement_pct: Option<f64>,
}

/// Full output of [`run_experiment`]: the deterministic report, the timing
/// sidecar, per-sample outcomes, and the per-channel diagnostic rows.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub timing: TimingBreakdown,
    pub run: SolidRun,
    pub channel_diagnostics: Vec<ChannelDiagnostic>,
    pub grid_evaluations: Vec<GridEvaluation>,
}

fn improvement_pair(base: MetricPair, adapted: MetricPair) -> MetricPair {
    let pct = |b: Option<f64>, a: Option<f64>| match (b, a) {
        (Some(b), Some(a)) if b > 0.0 => Some(improvement_percent(b, a)),
        _ => None,
    };
    MetricPair {
        mse: pct(base.mse, adapted.mse),
        mae: pct(base.mae, adapted.mae),
    }
}

/// Runs the whole pipeline. Every stage failure carries the stage name.
/// Numerical failures inside adaptation only abort under
/// [`FallbackPolicy::Error`]; the default policy converts them to fallbacks so
/// a report (with the fallback count) still comes out.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let total_clock = Instant::now();
    config.validate().map_err(|e| e.in_stage("config"))?;

    let clock = Instant::now();
    let loaded = read_csv(&config.dataset).map_err(|e| e.in_stage("load"))?;
    let series = loaded.series;
    let load_s = clock.elapsed().as_secs_f64();

    let spec = SplitSpec::new(config.train_ratio, config.val_ratio, config.test_ratio)
        .map_err(|e| e.in_stage("config"))?;
    let (n_train, n_val, _) = spec.lengths(series.len());
    let train_slice = series.slice_rows(0, n_train).map_err(|e| e.in_stage("split"))?;
    let standardizer = Standardizer::fit(&train_slice).map_err(|e| e.in_stage("standardize"))?;
    let standardized = standardizer.apply(&series).map_err(|e| e.in_stage("standardize"))?;

    let windows = make_windows(&standardized, config.lookback, config.horizon, 1)
        .map_err(|e| e.in_stage("windows"))?;
    let train_end = n_train as i64;
    let val_end = (n_train + n_val) as i64;
    let (train_windows, val_windows, test_windows) =
        partition_windows(&windows, train_end, val_end);
    if train_windows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training window fits: train split has {n_train} steps, need lookback {} + horizon {}",
            config.lookback, config.horizon
        ))
        .in_stage("fit"));
    }

    let clock = Instant::now();
    let model: Box<dyn Forecaster> = match &config.latents {
        Some(path) => {
            let dataset = Arc::new(LatentDataset::read(path).map_err(|e| e.in_stage("latents"))?);
            let anchors: Vec<i64> = train_windows.iter().map(|w| w.anchor_t).collect();
            Box::new(
                LatentForecaster::fit(dataset, &anchors, config.ridge)
                    .map_err(|e| e.in_stage("fit"))?,
            )
        }
        None => Box::new(
            LinearForecaster::fit(train_windows, config.ridge).map_err(|e| e.in_stage("fit"))?,
        ),
    };
    let fit_s = clock.elapsed().as_secs_f64();

    let t_star = match config.period {
        Some(p) => p,
        None => {
            let train_std = standardized
                .slice_rows(0, n_train)
                .map_err(|e| e.in_stage("period"))?;
            dominant_period(&train_std).map_err(|e| e.in_stage("period"))?.period
        }
    };

    let clock = Instant::now();
    let train_anchors: Vec<i64> = train_windows.iter().map(|w| w.anchor_t).collect();
    let phase_ctx = phase_context(&train_anchors, t_star).map_err(|e| e.in_stage("detect"))?;
    let segment_ctx =
        segment_context(&train_anchors, config.segments).map_err(|e| e.in_stage("detect"))?;
    let residuals =
        residual_matrices(model.as_ref(), train_windows).map_err(|e| e.in_stage("detect"))?;
    let delta_p_report =
        score_from_residuals(&residuals, &phase_ctx).map_err(|e| e.in_stage("detect"))?;
    let delta_t_report =
        score_from_residuals(&residuals, &segment_ctx).map_err(|e| e.in_stage("detect"))?;
    let channel_deltas = per_channel_deltas(model.as_ref(), train_windows, &phase_ctx)
        .map_err(|e| e.in_stage("detect"))?;
    let detect_s = clock.elapsed().as_secs_f64();

    let pool: &[WindowSample] = if config.train_only_pool { train_windows } else { &windows };
    let clock = Instant::now();
    let grid = grid_search(config, model.as_ref(), val_windows, pool, t_star)
        .map_err(|e| e.in_stage("grid-search"))?;
    let grid_search_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let run = run_solid(model.as_ref(), test_windows, pool, &grid.params, config.fallback_policy)
        .map_err(|e| e.in_stage("adapt"))?;
    let adaptation_s = clock.elapsed().as_secs_f64();

    // One timed plain-inference pass over the test split, doubling as the
    // per-channel error accumulation for the diagnostic rows.
    let clock = Instant::now();
    let m = standardized.channels();
    let mut base_abs = vec![0.0f64; m];
    let mut adapted_abs = vec![0.0f64; m];
    for (w, outcome) in test_windows.iter().zip(&run.outcomes) {
        let base_forecast = model.forecast_window(w).map_err(|e| e.in_stage("report"))?;
        for r in 0..w.horizon() {
            for c in 0..m {
                base_abs[c] += (base_forecast[(r, c)] - w.future[(r, c)]).abs();
                adapted_abs[c] += (outcome.forecast[(r, c)] - w.future[(r, c)]).abs();
            }
        }
    }
    let baseline_inference_s = clock.elapsed().as_secs_f64();
    let per_channel_count = (test_windows.len() * config.horizon) as f64;
    let channel_diagnostics = standardized
        .channel_names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let delta = channel_deltas[c];
            let mae_improvement_pct = if per_channel_count > 0.0 && base_abs[c] > 0.0 {
                Some(improvement_percent(
                    base_abs[c] / per_channel_count,
                    adapted_abs[c] / per_channel_count,
                ))
            } else {
                None
            };
            ChannelDiagnostic {
                channel: name.clone(),
                log10_delta_p: (delta > 0.0).then(|| delta.log10()),
                mae_improvement_pct,
            }
        })
        .collect();

    let baseline = MetricPair { mse: run.base_mse, mae: run.base_mae };
    let adapted = MetricPair { mse: run.adapted_mse, mae: run.adapted_mae };
    let report = ExperimentReport {
        dataset: config.dataset.display().to_string(),
        model: model.name().to_string(),
        num_channels: m,
        lookback: config.lookback,
        horizon: config.horizon,
        seed: config.seed,
        train_windows: train_windows.len(),
        val_windows: val_windows.len(),
        test_windows: test_windows.len(),
        t_star,
        delta_p: DetectorSummary::from_report(&delta_p_report, config.threshold),
        delta_t: DetectorSummary::from_report(&delta_t_report, config.threshold),
        chosen: ChosenParams {
            lambda_t: grid.params.lambda_t,
            lambda_p: grid.params.lambda_p,
            lambda_n: grid.params.lambda_n,
            lr_ratio: grid.lr_ratio,
            lr: grid.params.lr,
            validation_mse: grid.val_mse,
        },
        baseline,
        adapted,
        improvement: improvement_pair(baseline, adapted),
        fallback_count: run.fallback_count,
    };
    let timing = TimingBreakdown {
        load_s,
        fit_s,
        detect_s,
        grid_search_s,
        baseline_inference_s,
        adaptation_s,
        total_s: total_clock.elapsed().as_secs_f64(),
        adaptation_overhead_ratio: (baseline_inference_s > 0.0)
            .then(|| adaptation_s / baseline_inference_s),
    };
    Ok(ExperimentOutcome {
        report,
        timing,
        run,
        channel_diagnostics,
        grid_evaluations: grid.evaluations,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json_pretty<T: Serialize>(value: &T, what: &str) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format {
            path: what.into(),
            locus: "serialization".into(),
            reason: e.to_string(),
        })
}

fn csv_field(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `report.json`, `timing.json`, `per_sample.csv`, and
/// `detector_vs_improvement.csv` into `dir` and returns the paths. CSVs end
/// with a `# …=N` marker line so an empty test split is explicit rather than
/// just a lonely header.
pub fn emit_report(outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let report_path = dir.join("report.json");
    write_file(&report_path, &json_pretty(&outcome.report, "report.json")?)?;
    written.push(report_path);

    let timing_path = dir.join("timing.json");
    write_file(&timing_path, &json_pretty(&outcome.timing, "timing.json")?)?;
    written.push(timing_path);

    let mut per_sample = String::from("anchor,base_mse,adapted_mse,n_selected,fallback\n");
    for o in &outcome.run.outcomes {
        per_sample.push_str(&format!(
            "{},{},{},{},{}\n",
            o.anchor_t,
            o.base_mse,
            o.adapted_mse,
            o.trace.selected_anchors.len(),
            o.trace.fallback
        ));
    }
    per_sample.push_str(&format!("# samples={}\n", outcome.run.outcomes.len()));
    let per_sample_path = dir.join("per_sample.csv");
    write_file(&per_sample_path, &per_sample)?;
    written.push(per_sample_path);

    let mut detector = String::from("channel,log10_delta_p,mae_improvement_pct\n");
    let mut rows = 0usize;
    if !outcome.run.outcomes.is_empty() {
        for d in &outcome.channel_diagnostics {
            detector.push_str(&format!(
                "{},{},{}\n",
                d.channel,
                csv_field(d.log10_delta_p),
                csv_field(d.mae_improvement_pct)
            ));
            rows += 1;
        }
    }
    detector.push_str(&format!("# channels={rows}\n"));
    let detector_path = dir.join("detector_vs_improvement.csv");
    write_file(&detector_path, &detector)?;
    written.push(detector_path);

    Ok(written)
}
