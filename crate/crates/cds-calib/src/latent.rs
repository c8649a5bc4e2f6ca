//! Import/export bridge for externally computed feature vectors, so frozen
//! deep extractors can be calibrated without reimplementing them here.
//!
//! Two on-disk twins carry the same fields. Binary layout (all little-endian):
//! magic `b"CDSLAT1\0"`, name length (u32) + UTF-8 model name, d (u32),
//! T (u32), M (u32), record count (u64), then per record: anchor_t (i64),
//! d feature doubles, T·M future doubles in row-major order. The CSV twin has
//! a preamble line `CDSLAT1,<model_name>,<d>,<T>,<M>,<count>`, a column header,
//! and one row per record with floats printed shortest-round-trip.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::forecaster::{fit_head_least_squares, sgd_epoch, Forecaster, PredictionHead};

const MAGIC: &[u8; 8] = b"CDSLAT1\0";
const CSV_MAGIC: &str = "CDSLAT1";
/// Sanity cap on the model-name field when parsing untrusted files.
const MAX_NAME_LEN: usize = 4096;

/// Flattens a T×M matrix into a length-T·M vector, row by row.
pub fn flatten_row_major(matrix: &DMatrix<f64>) -> DVector<f64> {
    let (t, m) = matrix.shape();
    DVector::from_fn(t * m, |i, _| matrix[(i / m, i % m)])
}

/// Inverse of [`flatten_row_major`] for a declared T×M shape.
pub fn unflatten_row_major(vector: &DVector<f64>, t: usize, m: usize) -> Result<DMatrix<f64>> {
    if vector.len() != t * m {
        return Err(Error::ShapeMismatch(format!(
            "cannot reshape {} entries into {t}×{m}",
            vector.len()
        )));
    }
    Ok(DMatrix::from_fn(t, m, |i, j| vector[i * m + j]))
}

/// One exported sample: the extractor's feature vector for the window anchored
/// at `anchor_t`, and that window's ground-truth future.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub anchor_t: i64,
    pub feature: DVector<f64>,
    pub future: DMatrix<f64>,
}

/// A validated collection of latent records sharing one (d, T, M) signature,
/// with anchors strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    model_name: String,
    feature_dim: usize,
    horizon: usize,
    channels: usize,
    records: Vec<LatentRecord>,
    by_anchor: HashMap<i64, usize>,
}

impl LatentDataset {
    pub fn new(
        model_name: String,
        feature_dim: usize,
        horizon: usize,
        channels: usize,
        records: Vec<LatentRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("latent dataset has no records"));
        }
        if feature_dim == 0 || horizon == 0 || channels == 0 {
            return Err(Error::InvalidParameter {
                name: "latent dimensions",
                reason: format!("d={feature_dim}, T={horizon}, M={channels} must all be positive"),
            });
        }
        let mut by_anchor = HashMap::with_capacity(records.len());
        let mut prev: Option<i64> = None;
        for (i, rec) in records.iter().enumerate() {
            if rec.feature.len() != feature_dim {
                return Err(Error::ShapeMismatch(format!(
                    "record {i}: feature length {} but dataset declares d={feature_dim}",
                    rec.feature.len()
                )));
            }
            if rec.future.shape() != (horizon, channels) {
                return Err(Error::ShapeMismatch(format!(
                    "record {i}: future is {}×{} but dataset declares {horizon}×{channels}",
                    rec.future.nrows(),
                    rec.future.ncols()
                )));
            }
            if !(rec.feature.iter().all(|v| v.is_finite())
                && rec.future.iter().all(|v| v.is_finite()))
            {
                return Err(Error::InvalidParameter {
                    name: "latent record",
                    reason: format!("record {i} (anchor {}) has non-finite entries", rec.anchor_t),
                });
            }
            if let Some(p) = prev {
                if rec.anchor_t <= p {
                    return Err(Error::InvalidParameter {
                        name: "anchors",
                        reason: format!(
                            "must be strictly increasing, record {i} has {} after {p}",
                            rec.anchor_t
                        ),
                    });
                }
            }
            prev = Some(rec.anchor_t);
            by_anchor.insert(rec.anchor_t, i);
        }
        Ok(Self {
            model_name,
            feature_dim,
            horizon,
            channels,
            records,
            by_anchor,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LatentRecord] {
        &self.records
    }

    pub fn record(&self, anchor_t: i64) -> Option<&LatentRecord> {
        self.by_anchor.get(&anchor_t).map(|&i| &self.records[i])
    }

    /// Reads either twin, deciding by the byte after the 7-character magic:
    /// `,` means the CSV form, the binary form carries a NUL there.
    pub fn read(path: &Path) -> Result<Self> {
        let mut probe = [0u8; 8];
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let got = file.read(&mut probe).map_err(|e| Error::io(path, e))?;
        if got >= 8 && probe[..7] == MAGIC[..7] && probe[7] == b',' {
            Self::read_csv(path)
        } else {
            Self::read_binary(path)
        }
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let fmt = |locus: &str, reason: String| Error::Format {
            path: path.display().to_string(),
            locus: locus.to_string(),
            reason,
        };
        let mut magic = [0u8; 8];
        read_bytes(&mut reader, &mut magic, path, "header")?;
        if &magic != MAGIC {
            return Err(fmt("header", "bad magic, not a CDSLAT1 binary file".into()));
        }
        let name_len = read_u32(&mut reader, path, "header")? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(fmt("header", format!("model name length {name_len} exceeds {MAX_NAME_LEN}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        read_bytes(&mut reader, &mut name_bytes, path, "header")?;
        let model_name = String::from_utf8(name_bytes)
            .map_err(|e| fmt("header", format!("model name is not UTF-8: {e}")))?;
        let d = read_u32(&mut reader, path, "header")? as usize;
        let t = read_u32(&mut reader, path, "header")? as usize;
        let m = read_u32(&mut reader, path, "header")? as usize;
        let count = read_u64(&mut reader, path, "header")? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let locus = format!("record {i}");
            let anchor_t = read_i64(&mut reader, path, &locus)?;
            let mut feature = DVector::zeros(d);
            for k in 0..d {
                feature[k] = read_f64(&mut reader, path, &locus)?;
            }
            let mut flat = DVector::zeros(t * m);
            for k in 0..t * m {
                flat[k] = read_f64(&mut reader, path, &locus)?;
            }
            records.push(LatentRecord {
                anchor_t,
                feature,
                future: unflatten_row_major(&flat, t, m)?,
            });
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
            return Err(fmt("trailer", "trailing bytes after the declared record count".into()));
        }
        Self::new(model_name, d, t, m, records)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.model_name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(self.model_name.as_bytes()).map_err(io)?;
        for dim in [self.feature_dim, self.horizon, self.channels] {
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes()).map_err(io)?;
        for rec in &self.records {
            w.write_all(&rec.anchor_t.to_le_bytes()).map_err(io)?;
            for v in rec.feature.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            for v in flatten_row_major(&rec.future).iter() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let fmt = |locus: String, reason: String| Error::Format {
            path: path.display().to_string(),
            locus,
            reason,
        };
        let mut lines = reader.lines().enumerate();
        let preamble = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::EmptyInput("latent CSV file is empty")),
        };
        let fields: Vec<&str> = preamble.split(',').collect();
        if fields.len() != 6 || fields[0] != CSV_MAGIC {
            return Err(fmt(
                "line 1".into(),
                format!("expected `{CSV_MAGIC},<model>,<d>,<T>,<M>,<count>`, got {} fields", fields.len()),
            ));
        }
        let model_name = fields[1].to_string();
        let parse_dim = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                fmt("line 1".into(), format!("{what} is not a nonnegative integer: `{s}`"))
            })
        };
        let d = parse_dim(fields[2], "d")?;
        let t = parse_dim(fields[3], "T")?;
        let m = parse_dim(fields[4], "M")?;
        let count = parse_dim(fields[5], "count")?;
        // Column header line; content is informational, only arity is enforced.
        match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                let n = line.split(',').count();
                if n != 1 + d + t * m {
                    return Err(fmt(
                        "line 2".into(),
                        format!("header has {n} columns, records need {}", 1 + d + t * m),
                    ));
                }
            }
            None => return Err(fmt("line 2".into(), "missing column header".into())),
        }
        let mut records = Vec::with_capacity(count);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let locus = format!("line {}", idx + 1);
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 1 + d + t * m {
                return Err(fmt(
                    locus,
                    format!("row has {} fields, expected {}", cells.len(), 1 + d + t * m),
                ));
            }
            let anchor_t: i64 = cells[0].trim().parse().map_err(|_| {
                fmt(format!("line {}", idx + 1), format!("bad anchor `{}`", cells[0]))
            })?;
            let mut values = Vec::with_capacity(d + t * m);
            for cell in &cells[1..] {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    fmt(format!("line {}", idx + 1), format!("bad float `{cell}`"))
                })?;
                values.push(v);
            }
            let feature = DVector::from_column_slice(&values[..d]);
            let flat = DVector::from_column_slice(&values[d..]);
            records.push(LatentRecord {
                anchor_t,
                feature,
                future: unflatten_row_major(&flat, t, m)?,
            });
        }
        if records.len() != count {
            return Err(fmt(
                "trailer".into(),
                format!("preamble declares {count} records, file has {}", records.len()),
            ));
        }
        Self::new(model_name, d, t, m, records)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{CSV_MAGIC},{},{},{},{},{}",
            self.model_name,
            self.feature_dim,
            self.horizon,
            self.channels,
            self.records.len()
        );
        out.push_str(&csv_header(self.feature_dim, self.horizon * self.channels));
        for rec in &self.records {
            let _ = write!(out, "{}", rec.anchor_t);
            for v in rec.feature.iter() {
                let _ = write!(out, ",{v}");
            }
            for v in flatten_row_major(&rec.future).iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// The column-header line of the CSV twin, including a template's worth of
/// documentation value: `anchor_t,f0..f{d-1},y0..y{TM-1}`.
pub fn csv_header(d: usize, outputs: usize) -> String {
    let mut line = String::from("anchor_t");
    for i in 0..d {
        let _ = write!(line, ",f{i}");
    }
    for i in 0..outputs {
        let _ = write!(line, ",y{i}");
    }
    line.push('\n');
    line
}

fn read_bytes(r: &mut impl Read, buf: &mut [u8], path: &Path, locus: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format {
        path: path.display().to_string(),
        locus: locus.to_string(),
        reason: format!("truncated: {e}"),
    })
}

fn read_u32(r: &mut impl Read, path: &Path, locus: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_bytes(r, &mut b, path, locus)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path, locus: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, path, locus)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64(r: &mut impl Read, path: &Path, locus: &str) -> Result<i64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, path, locus)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &Path, locus: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, path, locus)?;
    Ok(f64::from_le_bytes(b))
}

/// A forecaster whose feature extractor lives outside this process: features
/// are looked up per anchor in a [`LatentDataset`], only the head is ours.
pub struct LatentForecaster {
    dataset: Arc<LatentDataset>,
    head: PredictionHead,
}

impl LatentForecaster {
    pub fn new(dataset: Arc<LatentDataset>, head: PredictionHead) -> Result<Self> {
        let want_out = dataset.horizon() * dataset.channels();
        if head.input_dim() != dataset.feature_dim() || head.output_dim() != want_out {
            return Err(Error::ShapeMismatch(format!(
                "head is {}×{}, dataset needs {}×{want_out}",
                head.input_dim(),
                head.output_dim(),
                dataset.feature_dim()
            )));
        }
        Ok(Self { dataset, head })
    }

    /// Fits the head by closed-form ridge on the records at `train_anchors`.
    pub fn fit(dataset: Arc<LatentDataset>, train_anchors: &[i64], ridge: f64) -> Result<Self> {
        if train_anchors.is_empty() {
            return Err(Error::EmptyInput("no training anchors for the latent head"));
        }
        let d = dataset.feature_dim();
        let out = dataset.horizon() * dataset.channels();
        let mut features = DMatrix::zeros(train_anchors.len(), d);
        let mut targets = DMatrix::zeros(train_anchors.len(), out);
        for (i, &anchor) in train_anchors.iter().enumerate() {
            let rec = dataset
                .record(anchor)
                .ok_or(Error::AnchorNotCovered { anchor })?;
            features.row_mut(i).tr_copy_from(&rec.feature);
            targets
                .row_mut(i)
                .tr_copy_from(&flatten_row_major(&rec.future));
        }
        let head = fit_head_least_squares(&features, &targets, ridge)?;
        Self::new(dataset, head)
    }

    pub fn head(&self) -> &PredictionHead {
        &self.head
    }

    pub fn dataset(&self) -> &Arc<LatentDataset> {
        &self.dataset
    }

    fn pair_for(&self, w: &WindowSample) -> Result<(DVector<f64>, DVector<f64>)> {
        let rec = self
            .dataset
            .record(w.anchor_t)
            .ok_or(Error::AnchorNotCovered { anchor: w.anchor_t })?;
        if w.future.shape() != (self.dataset.horizon(), self.dataset.channels()) {
            return Err(Error::ShapeMismatch(format!(
                "window future is {}×{}, dataset declares {}×{}",
                w.future.nrows(),
                w.future.ncols(),
                self.dataset.horizon(),
                self.dataset.channels()
            )));
        }
        Ok((rec.feature.clone(), flatten_row_major(&w.future)))
    }
}

impl Forecaster for LatentForecaster {
    fn name(&self) -> &str {
        self.dataset.model_name()
    }

    fn horizon(&self) -> usize {
        self.dataset.horizon()
    }

    fn channels(&self) -> usize {
        self.dataset.channels()
    }

    fn forecast_window(&self, window: &WindowSample) -> Result<DMatrix<f64>> {
        let rec = self
            .dataset
            .record(window.anchor_t)
            .ok_or(Error::AnchorNotCovered { anchor: window.anchor_t })?;
        unflatten_row_major(
            &self.head.predict(&rec.feature),
            self.dataset.horizon(),
            self.dataset.channels(),
        )
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
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = dctx
            .iter()
            .map(|w| self.pair_for(w))
            .collect::<Result<_>>()?;
        let head = sgd_epoch(&self.head, &pairs, lr, batch_size.unwrap_or(pairs.len()))?;
        Ok(Box::new(Self {
            dataset: Arc::clone(&self.dataset),
            head,
        }))
    }
}
