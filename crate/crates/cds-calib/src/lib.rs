//! Calibration toolkit for time-series forecasting models: detects
//! context-driven distribution shift in a trained model's residuals and
//! corrects it with per-sample test-time adaptation of the prediction layer.

pub mod data;
pub mod error;
pub mod forecaster;
pub mod latent;
pub mod metrics;
pub mod periodicity;
pub mod pipeline;
pub mod reconditionor;
pub mod solid;
pub mod synthetic;
pub mod theory;

pub use data::{
    chronological_split, make_windows, read_csv, LoadedCsv, SplitSpec, Standardizer, TimeSeries,
    WindowSample,
};
pub use error::{Error, Result};
pub use forecaster::{
    fit_head_least_squares, sgd_epoch, Forecaster, LinearForecaster, PredictionHead,
};
pub use latent::{LatentDataset, LatentForecaster, LatentRecord};
pub use metrics::{improvement_percent, mse_mae, sample_mse};
pub use periodicity::{dominant_period, PeriodEstimate};
pub use pipeline::{
    emit_report, grid_search, partition_ranges, partition_windows, run_experiment,
    ChannelDiagnostic, ChosenParams, DetectorSummary, ExperimentConfig, ExperimentOutcome,
    ExperimentReport, GridEvaluation, GridOutcome, MetricPair, TimingBreakdown,
};
pub use reconditionor::{
    kl_gaussian, phase_context, reconditionor_score, segment_context, ContextAssignment,
    ContextKind, DetectorReport, GaussianSummary, STRONG_CDS_LOG10_THRESHOLD,
};
pub use solid::{
    adapt_and_predict, candidate_anchors, run_solid, select_contextualized, AdaptationTrace,
    ContextualizedDataset, FallbackPolicy, SolidOutcome, SolidParams, SolidRun,
};
pub use synthetic::{iid_noise_series, noisy_sinusoid, phase_profile, phase_shifted_series};
pub use theory::{
    analytic_excess_risk_clr, analytic_excess_risk_glr, fit_clr, fit_glr,
    monte_carlo_excess_risk, monte_carlo_excess_risk_with, sample_outputs, sample_outputs_with,
    EstimatorKind, FixedDesignProblem, Group, MonteCarloEstimate, NoiseKind, RiskBreakdown,
};
