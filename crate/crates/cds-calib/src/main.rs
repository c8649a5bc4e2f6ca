//! Command-line front end: period detection, shift detection, single-setting
//! adaptation, theory verification, the full experiment pipeline, and a
//! latent-file template exporter. Every config key can come from a TOML file
//! and be overridden by a flag; `CDS_CALIB_SEED` outranks both.

use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use cds_calib::data::{make_windows, read_csv, SplitSpec, Standardizer, TimeSeries, WindowSample};
use cds_calib::error::{Error, Result};
use cds_calib::forecaster::{Forecaster, LinearForecaster};
use cds_calib::latent::{LatentDataset, LatentForecaster, LatentRecord};
use cds_calib::periodicity::dominant_period;
use cds_calib::pipeline::{
    emit_report, partition_ranges, run_experiment, ExperimentConfig, ExperimentReport,
};
use cds_calib::reconditionor::{
    per_channel_deltas, per_horizon_deltas, phase_context, residual_matrices,
    score_from_residuals, segment_context, DetectorReport,
};
use cds_calib::solid::{run_solid, FallbackPolicy, SolidParams};
use cds_calib::theory::{
    analytic_excess_risk_clr, analytic_excess_risk_glr, monte_carlo_excess_risk, EstimatorKind,
    FixedDesignProblem, Group, MonteCarloEstimate, RiskBreakdown,
};

#[derive(Parser)]
#[command(
    name = "cds-calib",
    version,
    about = "Detects context-driven shift in forecast residuals and corrects it per test sample"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the dominant period of a CSV series via its FFT amplitude peak.
    DetectPeriod {
        /// CSV with a header row and an optional leading timestamp column.
        #[arg(long)]
        data: PathBuf,
        /// Chronological split ratios; the pipeline estimates T* on the train
        /// portion only, so the train-split figure is the one it will use.
        #[arg(long, default_value_t = 0.6)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        val_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        test_ratio: f64,
    },
    /// Fit the baseline and score residual shift against phase and segment contexts.
    Detect {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Adapt the test split with one fixed hyperparameter setting (no grid search).
    Adapt {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        lambda_t: usize,
        #[arg(long)]
        lambda_p: f64,
        #[arg(long)]
        lambda_n: usize,
        #[arg(long)]
        lr_ratio: f64,
    },
    /// Check the closed-form bias/variance risks against a Monte-Carlo oracle.
    VerifyTheory {
        /// Number of contexts (groups).
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Parameter dimension.
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        n_per_group: usize,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Full pipeline: detect, grid-search on validation, adapt test, emit artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a schema-correct latent file with zeroed features for an external model to fill.
    ExportLatentsTemplate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 336)]
        lookback: usize,
        #[arg(long, default_value_t = 96)]
        horizon: usize,
        #[arg(long, default_value_t = 0.6)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        val_ratio: f64,
        #[arg(long, default_value_t = 0.2)]
        test_ratio: f64,
        /// Width of the feature vectors the external model will provide.
        #[arg(long)]
        feature_dim: usize,
        #[arg(long, default_value = "template")]
        model_name: String,
        #[arg(long, value_enum, default_value_t = LatentFormat::Csv)]
        format: LatentFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LatentFormat {
    Csv,
    Binary,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PolicyArg {
    /// Serve the base forecast when adaptation goes non-finite.
    Base,
    /// Abort the run instead.
    Error,
}

impl From<PolicyArg> for FallbackPolicy {
    fn from(value: PolicyArg) -> Self {
        match value {
            PolicyArg::Base => FallbackPolicy::Base,
            PolicyArg::Error => FallbackPolicy::Error,
        }
    }
}

/// Config file plus one override flag per key. Precedence: CDS_CALIB_SEED
/// env var > flag > config file > built-in default.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// TOML config file; any flag below overrides its key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (config key `dataset`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Exported latent-feature file replacing the raw-history baseline.
    #[arg(long)]
    latents: Option<PathBuf>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    train_ratio: Option<f64>,
    #[arg(long)]
    val_ratio: Option<f64>,
    #[arg(long)]
    test_ratio: Option<f64>,
    /// log10 δ above which a shift counts as strong.
    #[arg(long)]
    threshold: Option<f64>,
    /// Number of equal temporal segments for δ_T.
    #[arg(long)]
    segments: Option<usize>,
    /// Fixed period (skips detection).
    #[arg(long)]
    period: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Nominal training-stage learning rate; adaptation lr = lr-ratio × this.
    #[arg(long)]
    train_lr: Option<f64>,
    /// Comma-separated λ_T grid.
    #[arg(long, value_delimiter = ',')]
    lambda_t_grid: Option<Vec<usize>>,
    /// Comma-separated λ_P grid.
    #[arg(long, value_delimiter = ',')]
    lambda_p_grid: Option<Vec<f64>>,
    /// Comma-separated λ_N grid.
    #[arg(long, value_delimiter = ',')]
    lambda_n_grid: Option<Vec<usize>>,
    /// Comma-separated lr-ratio grid.
    #[arg(long, value_delimiter = ',')]
    lr_ratio_grid: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Wrap phase distance around the period boundary.
    #[arg(long)]
    circular_phase: Option<bool>,
    /// Fine-tuning minibatch size (full batch when omitted).
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    fallback_policy: Option<PolicyArg>,
    /// Restrict adaptation candidates to train-split windows.
    #[arg(long)]
    train_only_pool: Option<bool>,
    /// Output directory for artifacts (config key `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.data {
            config.dataset = v.clone();
        }
        if let Some(v) = &self.latents {
            config.latents = Some(v.clone());
        }
        if let Some(v) = self.lookback {
            config.lookback = v;
        }
        if let Some(v) = self.horizon {
            config.horizon = v;
        }
        if let Some(v) = self.train_ratio {
            config.train_ratio = v;
        }
        if let Some(v) = self.val_ratio {
            config.val_ratio = v;
        }
        if let Some(v) = self.test_ratio {
            config.test_ratio = v;
        }
        if let Some(v) = self.threshold {
            config.threshold = v;
        }
        if let Some(v) = self.segments {
            config.segments = v;
        }
        if let Some(v) = self.period {
            config.period = Some(v);
        }
        if let Some(v) = self.ridge {
            config.ridge = v;
        }
        if let Some(v) = self.train_lr {
            config.train_lr = v;
        }
        if let Some(v) = &self.lambda_t_grid {
            config.lambda_t_grid = v.clone();
        }
        if let Some(v) = &self.lambda_p_grid {
            config.lambda_p_grid = v.clone();
        }
        if let Some(v) = &self.lambda_n_grid {
            config.lambda_n_grid = v.clone();
        }
        if let Some(v) = &self.lr_ratio_grid {
            config.lr_ratio_grid = v.clone();
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.circular_phase {
            config.circular_phase = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = Some(v);
        }
        if let Some(v) = self.fallback_policy {
            config.fallback_policy = v.into();
        }
        if let Some(v) = self.train_only_pool {
            config.train_only_pool = v;
        }
        if let Some(v) = &self.out {
            config.output_dir = Some(v.clone());
        }
        if let Ok(seed) = std::env::var("CDS_CALIB_SEED") {
            config.seed = seed.parse().map_err(|_| Error::InvalidParameter {
                name: "CDS_CALIB_SEED",
                reason: format!("not an unsigned integer: {seed:?}"),
            })?;
        }
        Ok(config)
    }
}

/// Shared preamble for `detect` and `adapt`: load, split, standardize,
/// window, fit, and resolve the period. Ranges index into `windows`.
struct Prepared {
    standardized: TimeSeries,
    windows: Vec<WindowSample>,
    train: Range<usize>,
    #[allow(dead_code)]
    val: Range<usize>,
    test: Range<usize>,
    model: Box<dyn Forecaster>,
    t_star: usize,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let series = read_csv(&config.dataset)?.series;
    let spec = SplitSpec::new(config.train_ratio, config.val_ratio, config.test_ratio)?;
    let (n_train, n_val, _) = spec.lengths(series.len());
    let standardizer = Standardizer::fit(&series.slice_rows(0, n_train)?)?;
    let standardized = standardizer.apply(&series)?;
    let windows = make_windows(&standardized, config.lookback, config.horizon, 1)?;
    let (train, val, test) =
        partition_ranges(&windows, n_train as i64, (n_train + n_val) as i64);
    if train.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training window fits: train split has {n_train} steps, need lookback {} + horizon {}",
            config.lookback, config.horizon
        )));
    }
    let model: Box<dyn Forecaster> = match &config.latents {
        Some(path) => {
            let dataset = Arc::new(LatentDataset::read(path)?);
            let anchors: Vec<i64> =
                windows[train.clone()].iter().map(|w| w.anchor_t).collect();
            Box::new(LatentForecaster::fit(dataset, &anchors, config.ridge)?)
        }
        None => Box::new(LinearForecaster::fit(&windows[train.clone()], config.ridge)?),
    };
    let t_star = match config.period {
        Some(p) => p,
        None => dominant_period(&standardized.slice_rows(0, n_train)?)?.period,
    };
    Ok(Prepared { standardized, windows, train, val, test, model, t_star })
}

fn print_detector_line(label: &str, report: &DetectorReport, threshold: f64) {
    let verdict = if report.is_strong(threshold) { "STRONG" } else { "weak" };
    let log10 = if report.delta > 0.0 {
        format!("{:8.4}", report.log10_delta)
    } else {
        "    -inf".to_string()
    };
    println!(
        "{label}  K={:<4} δ = {:.6e}   log10 δ = {log10}   {verdict}",
        report.num_contexts, report.delta
    );
    if !report.dropped_contexts.is_empty() {
        println!(
            "          ({} contexts dropped for having <2 residual entries)",
            report.dropped_contexts.len()
        );
    }
}

fn log10_or_dash(delta: f64) -> String {
    if delta > 0.0 {
        format!("{:8.4}", delta.log10())
    } else {
        "       —".to_string()
    }
}

fn cmd_detect_period(data: &PathBuf, split: SplitSpec) -> Result<()> {
    let series = read_csv(data)?.series;
    println!(
        "dataset: {} ({} steps, {} channels)",
        data.display(),
        series.len(),
        series.channels()
    );
    let (train_len, _, _) = split.lengths(series.len());
    let train = series.slice_rows(0, train_len)?;
    let on_train = dominant_period(&train)?;
    println!(
        "train split ({} steps): T* = {} (frequency index {}, aggregate amplitude {:.6e})",
        train_len, on_train.period, on_train.frequency_index, on_train.aggregate_amplitude
    );
    let full = dominant_period(&series)?;
    println!(
        "full series:        T* = {} (frequency index {}, aggregate amplitude {:.6e})",
        full.period, full.frequency_index, full.aggregate_amplitude
    );
    Ok(())
}

fn cmd_detect(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let prepared = prepare(&config)?;
    let train_windows = &prepared.windows[prepared.train.clone()];
    let anchors: Vec<i64> = train_windows.iter().map(|w| w.anchor_t).collect();
    let residuals = residual_matrices(prepared.model.as_ref(), train_windows)?;
    let phase_ctx = phase_context(&anchors, prepared.t_star)?;
    let segment_ctx = segment_context(&anchors, config.segments)?;
    let delta_p = score_from_residuals(&residuals, &phase_ctx)?;
    let delta_t = score_from_residuals(&residuals, &segment_ctx)?;

    println!(
        "baseline: {} (lookback {}, horizon {}, ridge {:e})",
        prepared.model.name(),
        config.lookback,
        config.horizon,
        config.ridge
    );
    println!(
        "train windows: {}   T* = {}   threshold: log10 δ ≥ {}",
        train_windows.len(),
        prepared.t_star,
        config.threshold
    );
    print_detector_line("δ_P (phase)  ", &delta_p, config.threshold);
    print_detector_line("δ_T (segment)", &delta_t, config.threshold);

    let channel_deltas = per_channel_deltas(prepared.model.as_ref(), train_windows, &phase_ctx)?;
    println!("per-channel log10 δ_P:");
    for (name, delta) in prepared.standardized.channel_names().iter().zip(&channel_deltas) {
        println!("  {name:<12} {}", log10_or_dash(*delta));
    }
    let horizon_deltas = per_horizon_deltas(prepared.model.as_ref(), train_windows, &phase_ctx)?;
    let positive: Vec<f64> =
        horizon_deltas.iter().copied().filter(|d| *d > 0.0).map(f64::log10).collect();
    if let (Some(min), Some(max)) = (
        positive.iter().copied().reduce(f64::min),
        positive.iter().copied().reduce(f64::max),
    ) {
        println!(
            "per-horizon log10 δ_P over {} steps: min {min:.4}, max {max:.4}",
            horizon_deltas.len()
        );
    }
    Ok(())
}

fn cmd_adapt(
    args: &ConfigArgs,
    lambda_t: usize,
    lambda_p: f64,
    lambda_n: usize,
    lr_ratio: f64,
) -> Result<()> {
    let config = args.resolve()?;
    let prepared = prepare(&config)?;
    let params = SolidParams {
        lambda_t,
        lambda_p,
        lambda_n,
        lr: lr_ratio * config.train_lr,
        t_star: prepared.t_star,
        circular_phase: config.circular_phase,
        batch_size: config.batch_size,
    };
    let pool: &[WindowSample] = if config.train_only_pool {
        &prepared.windows[prepared.train.clone()]
    } else {
        &prepared.windows
    };
    let test_windows = &prepared.windows[prepared.test.clone()];
    let run = run_solid(
        prepared.model.as_ref(),
        test_windows,
        pool,
        &params,
        config.fallback_policy,
    )?;
    println!(
        "adapted {} test samples (λ_T={lambda_t}, λ_P={lambda_p}, λ_N={lambda_n}, lr={:e}, T*={})",
        test_windows.len(),
        params.lr,
        prepared.t_star
    );
    match (run.base_mse, run.adapted_mse, run.base_mae, run.adapted_mae) {
        (Some(bm), Some(am), Some(bmae), Some(amae)) => {
            println!("baseline  MSE {bm:.6}   MAE {bmae:.6}");
            println!("adapted   MSE {am:.6}   MAE {amae:.6}");
            println!(
                "improvement: MSE {:+.3}%, MAE {:+.3}%",
                cds_calib::metrics::improvement_percent(bm, am),
                cds_calib::metrics::improvement_percent(bmae, amae)
            );
        }
        _ => println!("no test samples to score"),
    }
    println!("fallbacks: {}", run.fallback_count);
    Ok(())
}

fn verdict(analytic: f64, mc: &MonteCarloEstimate) -> (&'static str, bool) {
    let pass = (mc.estimate - analytic).abs() <= 3.0 * mc.standard_error;
    (if pass { "PASS" } else { "FAIL" }, pass)
}

fn print_theory_row(
    name: &str,
    analytic: &RiskBreakdown,
    mc: &MonteCarloEstimate,
) -> bool {
    println!(
        "{name}  analytic bias {:.6}  variance {:.6}  total {:.6}",
        analytic.bias, analytic.variance, analytic.total
    );
    let (word, pass) = verdict(analytic.total, mc);
    println!(
        "      monte-carlo {:.6} ± {:.6} (3·SE {:.6})  →  {word}",
        mc.estimate,
        mc.standard_error,
        3.0 * mc.standard_error
    );
    println!(
        "      fresh-noise cross-check {:.6} ± {:.6}",
        mc.fresh_noise_estimate, mc.fresh_noise_standard_error
    );
    pass
}

fn cmd_verify_theory(
    k: usize,
    d: usize,
    n_per_group: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<bool> {
    let problem = FixedDesignProblem::random(k, d, n_per_group, sigma, seed)?;
    println!("problem: K={k}, d={d}, n_i={n_per_group}, σ={sigma}, seed={seed}, trials={trials}");

    let glr_analytic = analytic_excess_risk_glr(&problem)?;
    let glr_mc = monte_carlo_excess_risk(&problem, EstimatorKind::Glr, trials, seed)?;
    let glr_pass = print_theory_row("GLR", &glr_analytic, &glr_mc);

    let clr_analytic = analytic_excess_risk_clr(&problem)?;
    let clr_mc = monte_carlo_excess_risk(&problem, EstimatorKind::Clr, trials, seed)?;
    let clr_pass = print_theory_row("CLR", &clr_analytic, &clr_mc);

    // With every θ_i identical the global fit loses its bias and the analytic
    // risks must differ by exactly (K−1)σ²d.
    let shared = problem.groups()[0].theta.clone();
    let control_groups = problem
        .groups()
        .iter()
        .map(|g| Group { design: g.design.clone(), theta: shared.clone() })
        .collect();
    let control = FixedDesignProblem::new(control_groups, sigma)?;
    let gap = analytic_excess_risk_clr(&control)?.total - analytic_excess_risk_glr(&control)?.total;
    let expected_gap = (k as f64 - 1.0) * sigma * sigma * d as f64;
    let control_pass = (gap - expected_gap).abs() < 1e-9;
    println!(
        "identical-θ control: CLR − GLR = {gap:.6}, (K−1)σ²d = {expected_gap:.6}  →  {}",
        if control_pass { "PASS" } else { "FAIL" }
    );
    Ok(glr_pass && clr_pass && control_pass)
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let outcome = run_experiment(&config)?;
    print_report_summary(&outcome.report);
    println!(
        "timing: fit {:.2}s, detect {:.2}s, grid {:.2}s, adapt {:.2}s (total {:.2}s)",
        outcome.timing.fit_s,
        outcome.timing.detect_s,
        outcome.timing.grid_search_s,
        outcome.timing.adaptation_s,
        outcome.timing.total_s
    );
    match &config.output_dir {
        Some(dir) => {
            let files = emit_report(&outcome, dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        None => println!("no output directory configured; artifacts not written (use --out)"),
    }
    Ok(())
}

fn print_report_summary(report: &ExperimentReport) {
    println!(
        "{} · {} channels · lookback {} · horizon {} · windows {}/{}/{}",
        report.dataset,
        report.num_channels,
        report.lookback,
        report.horizon,
        report.train_windows,
        report.val_windows,
        report.test_windows
    );
    let fmt_log = |v: Option<f64>| v.map_or("—".to_string(), |x| format!("{x:.4}"));
    println!(
        "T* = {}   log10 δ_P = {} ({})   log10 δ_T = {} ({})",
        report.t_star,
        fmt_log(report.delta_p.log10_delta),
        if report.delta_p.strong { "strong" } else { "weak" },
        fmt_log(report.delta_t.log10_delta),
        if report.delta_t.strong { "strong" } else { "weak" },
    );
    println!(
        "chosen: λ_T={} λ_P={} λ_N={} lr-ratio={} (val MSE {})",
        report.chosen.lambda_t,
        report.chosen.lambda_p,
        report.chosen.lambda_n,
        report.chosen.lr_ratio,
        report.chosen.validation_mse.map_or("—".to_string(), |v| format!("{v:.6}")),
    );
    let fmt = |v: Option<f64>| v.map_or("—".to_string(), |x| format!("{x:.6}"));
    println!(
        "baseline MSE {} MAE {}   adapted MSE {} MAE {}",
        fmt(report.baseline.mse),
        fmt(report.baseline.mae),
        fmt(report.adapted.mse),
        fmt(report.adapted.mae)
    );
    let fmt_pct = |v: Option<f64>| v.map_or("—".to_string(), |x| format!("{x:+.3}%"));
    println!(
        "improvement: MSE {}, MAE {}   fallbacks: {}",
        fmt_pct(report.improvement.mse),
        fmt_pct(report.improvement.mae),
        report.fallback_count
    );
}

fn cmd_export_latents_template(
    data: &PathBuf,
    lookback: usize,
    horizon: usize,
    ratios: (f64, f64, f64),
    feature_dim: usize,
    model_name: &str,
    format: LatentFormat,
    out: &PathBuf,
) -> Result<()> {
    if feature_dim == 0 {
        return Err(Error::InvalidParameter {
            name: "feature_dim",
            reason: "must be positive".into(),
        });
    }
    let series = read_csv(data)?.series;
    let spec = SplitSpec::new(ratios.0, ratios.1, ratios.2)?;
    let (n_train, _, _) = spec.lengths(series.len());
    let standardizer = Standardizer::fit(&series.slice_rows(0, n_train)?)?;
    let standardized = standardizer.apply(&series)?;
    let windows = make_windows(&standardized, lookback, horizon, 1)?;
    let records: Vec<LatentRecord> = windows
        .iter()
        .map(|w| LatentRecord {
            anchor_t: w.anchor_t,
            feature: DVector::zeros(feature_dim),
            future: w.future.clone(),
        })
        .collect();
    let first = records.first().map(|r| r.anchor_t);
    let last = records.last().map(|r| r.anchor_t);
    let count = records.len();
    let dataset = LatentDataset::new(
        model_name.to_string(),
        feature_dim,
        horizon,
        standardized.channels(),
        records,
    )?;
    match format {
        LatentFormat::Csv => dataset.write_csv(out)?,
        LatentFormat::Binary => dataset.write_binary(out)?,
    }
    println!(
        "wrote {count} zero-feature records (anchors {}..={}, d={feature_dim}, T={horizon}, M={}) to {}",
        first.unwrap_or(0),
        last.unwrap_or(0),
        standardized.channels(),
        out.display()
    );
    println!(
        "futures are standardized with train-split statistics (ratios {}/{}/{}); \
         replace the zero features with your model's final-layer inputs per anchor",
        ratios.0, ratios.1, ratios.2
    );
    Ok(())
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::DetectPeriod {
            data,
            train_ratio,
            val_ratio,
            test_ratio,
        } => cmd_detect_period(data, SplitSpec::new(*train_ratio, *val_ratio, *test_ratio)?)
            .map(|_| true),
        Command::Detect { config } => cmd_detect(config).map(|_| true),
        Command::Adapt { config, lambda_t, lambda_p, lambda_n, lr_ratio } => {
            cmd_adapt(config, *lambda_t, *lambda_p, *lambda_n, *lr_ratio).map(|_| true)
        }
        Command::VerifyTheory { k, d, n_per_group, sigma, trials, seed } => {
            cmd_verify_theory(*k, *d, *n_per_group, *sigma, *trials, *seed)
        }
        Command::Run { config } => cmd_run(config).map(|_| true),
        Command::ExportLatentsTemplate {
            data,
            lookback,
            horizon,
            train_ratio,
            val_ratio,
            test_ratio,
            feature_dim,
            model_name,
            format,
            out,
        } => cmd_export_latents_template(
            data,
            *lookback,
            *horizon,
            (*train_ratio, *val_ratio, *test_ratio),
            *feature_dim,
            model_name,
            *format,
            out,
        )
        .map(|_| true),
    }
}

fn main() {
    // Die quietly when stdout closes early (`cds-calib detect | head`)
    // instead of panicking on EPIPE inside println!.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match real_main() {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            std::process::exit(1);
        }
    }
}
