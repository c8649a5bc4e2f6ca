//! Time-series containers, sliding windows, chronological splits, per-channel
//! standardization, and CSV ingestion.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum admissible standard deviation. Smaller values are clamped so that
/// constant channels and degenerate residual groups cannot emit NaNs.
pub const STD_FLOOR: f64 = 1e-8;

/// An N×M multichannel series: rows are time steps, columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    channel_names: Vec<String>,
    start_index: i64,
}

impl TimeSeries {
    /// Builds a nonempty series. Every entry must be finite and channel names
    /// must be unique.
    pub fn new(values: DMatrix<f64>, channel_names: Vec<String>, start_index: i64) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::EmptyInput("time series needs at least one row"));
        }
        Self::from_parts(values, channel_names, start_index)
    }

    /// Like `new` but admits zero rows; chronological splits with a zero ratio
    /// legitimately produce empty segments.
    fn from_parts(values: DMatrix<f64>, channel_names: Vec<String>, start_index: i64) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::EmptyInput("time series needs at least one channel"));
        }
        if channel_names.len() != values.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                values.ncols()
            )));
        }
        for (i, a) in channel_names.iter().enumerate() {
            if channel_names[..i].contains(a) {
                return Err(Error::InvalidParameter {
                    name: "channel_names",
                    reason: format!("duplicate channel name `{a}`"),
                });
            }
        }
        if let Some((r, c)) = first_non_finite(&values) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("non-finite entry at row {r}, channel {c}"),
            });
        }
        Ok(Self {
            values,
            channel_names,
            start_index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// Time index of row 0. Split segments keep the parent's clock so window
    /// anchors stay globally comparable.
    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    /// One channel as an owned vector (column copy).
    pub fn channel(&self, m: usize) -> Vec<f64> {
        self.values.column(m).iter().copied().collect()
    }

    /// Contiguous row range `[from, from+len)` as a new series whose
    /// `start_index` advances by `from`.
    pub fn slice_rows(&self, from: usize, len: usize) -> Result<TimeSeries> {
        if from + len > self.len() {
            return Err(Error::ShapeMismatch(format!(
                "slice [{from}, {}) out of bounds for {} rows",
                from + len,
                self.len()
            )));
        }
        Ok(TimeSeries {
            values: self.values.rows(from, len).into_owned(),
            channel_names: self.channel_names.clone(),
            start_index: self.start_index + from as i64,
        })
    }
}

fn first_non_finite(values: &DMatrix<f64>) -> Option<(usize, usize)> {
    for c in 0..values.ncols() {
        for r in 0..values.nrows() {
            if !values[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// One forecasting instance: `history` covers times `[anchor_t − L, anchor_t)`
/// and `future` covers `[anchor_t, anchor_t + T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub anchor_t: i64,
    pub history: DMatrix<f64>,
    pub future: DMatrix<f64>,
}

impl WindowSample {
    pub fn lookback(&self) -> usize {
        self.history.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.future.nrows()
    }

    pub fn channels(&self) -> usize {
        self.history.ncols()
    }
}

/// Sliding windows at anchors `L, L+stride, …` (series-local), each with an
/// L-row history and T-row future. Count is `floor((N−L−T)/stride) + 1`.
pub fn make_windows(
    series: &TimeSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    for (name, v) in [("lookback", lookback), ("horizon", horizon), ("stride", stride)] {
        if v == 0 {
            return Err(Error::InvalidParameter {
                name,
                reason: "must be at least 1".into(),
            });
        }
    }
    let n = series.len();
    if n < lookback + horizon {
        return Err(Error::SeriesTooShort {
            required: lookback + horizon,
            actual: n,
        });
    }
    let mut windows = Vec::with_capacity((n - lookback - horizon) / stride + 1);
    let mut t = lookback;
    while t + horizon <= n {
        windows.push(WindowSample {
            anchor_t: series.start_index() + t as i64,
            history: series.values().rows(t - lookback, lookback).into_owned(),
            future: series.values().rows(t, horizon).into_owned(),
        });
        t += stride;
    }
    Ok(windows)
}

/// Train/val/test ratios; must be in [0,1] and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = SplitSpec { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter {
                    name: "ratios",
                    reason: format!("{name} ratio {r} outside [0, 1]"),
                });
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "ratios",
                reason: format!("ratios sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }

    /// Segment lengths: floor for train and val, remainder to test. The tiny
    /// epsilon keeps exact products like 0.7·10 from rounding below the
    /// intended integer.
    pub fn lengths(&self, n: usize) -> (usize, usize, usize) {
        let n_train = ((n as f64) * self.train + 1e-9).floor() as usize;
        let n_val = ((n as f64) * self.val + 1e-9).floor() as usize;
        let n_train = n_train.min(n);
        let n_val = n_val.min(n - n_train);
        (n_train, n_val, n - n_train - n_val)
    }
}

/// Splits into three contiguous, order-preserving segments whose concatenation
/// reconstructs the input. Zero-ratio segments come back empty.
pub fn chronological_split(
    series: &TimeSeries,
    spec: &SplitSpec,
) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    spec.validate()?;
    let n = series.len();
    if n < 3 {
        return Err(Error::SeriesTooShort {
            required: 3,
            actual: n,
        });
    }
    let (n_train, n_val, n_test) = spec.lengths(n);
    let train = series.slice_rows(0, n_train)?;
    let val = series.slice_rows(n_train, n_val)?;
    let test = series.slice_rows(n_train + n_val, n_test)?;
    Ok((train, val, test))
}

/// Per-channel affine normalizer fitted on train-split statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Population mean/std per channel (divide by n); stds below [`STD_FLOOR`]
    /// are clamped.
    pub fn fit(train: &TimeSeries) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("cannot fit standardizer on empty series"));
        }
        let n = train.len() as f64;
        let mut mean = Vec::with_capacity(train.channels());
        let mut std = Vec::with_capacity(train.channels());
        for m in 0..train.channels() {
            let col = train.values().column(m);
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.transform(series, |v, mu, sd| (v - mu) / sd)
    }

    pub fn invert(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.transform(series, |v, mu, sd| v * sd + mu)
    }

    fn transform(&self, series: &TimeSeries, f: impl Fn(f64, f64, f64) -> f64) -> Result<TimeSeries> {
        if series.channels() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "standardizer fitted on {} channels, series has {}",
                self.mean.len(),
                series.channels()
            )));
        }
        let mut values = series.values().clone();
        for m in 0..values.ncols() {
            let (mu, sd) = (self.mean[m], self.std[m]);
            for v in values.column_mut(m).iter_mut() {
                *v = f(*v, mu, sd);
            }
        }
        TimeSeries::from_parts(values, series.channel_names().to_vec(), series.start_index())
    }
}

/// A parsed CSV: the numeric series plus the optional leading timestamp column
/// (kept verbatim; never used in arithmetic).
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub series: TimeSeries,
    pub timestamps: Option<Vec<String>>,
}

/// Reads a comma-separated file with a mandatory header row. If the first
/// column of the first data row does not parse as a float it is treated as a
/// timestamp column; all remaining columns must be finite numbers.
pub fn read_csv(path: &Path) -> Result<LoadedCsv> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(&display, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&display, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyInput("CSV has no columns"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut timestamps: Option<Vec<String>> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let line = i + 2; // 1-based, after the header
        if i == 0 && record.get(0).is_some_and(|f| f.trim().parse::<f64>().is_err()) {
            timestamps = Some(Vec::new());
        }
        let skip = usize::from(timestamps.is_some());
        if record.len() <= skip {
            return Err(Error::Format {
                path: display,
                locus: format!("line {line}"),
                reason: "row has no numeric columns".into(),
            });
        }
        if let Some(ts) = timestamps.as_mut() {
            ts.push(record[0].to_string());
        }
        let mut row = Vec::with_capacity(record.len() - skip);
        for (j, field) in record.iter().enumerate().skip(skip) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                path: display.clone(),
                locus: format!("line {line}, column {}", j + 1),
                reason: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    path: display.clone(),
                    locus: format!("line {line}, column {}", j + 1),
                    reason: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("CSV has no data rows"));
    }

    let skip = usize::from(timestamps.is_some());
    let m = headers.len() - skip;
    let names: Vec<String> = headers[skip..].to_vec();
    let values = DMatrix::from_row_iterator(rows.len(), m, rows.iter().flatten().copied());
    let series = TimeSeries::new(values, names, 0)?;
    Ok(LoadedCsv { series, timestamps })
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let locus = match e.position() {
        Some(p) => format!("line {}", p.line()),
        None => "unknown position".into(),
    };
    Error::Format {
        path: path.to_string(),
        locus,
        reason: e.to_string(),
    }
}
