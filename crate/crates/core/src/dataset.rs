//! Measured input/output records and their z-score normalization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-aligned input and output channels, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    /// K x n_u
    pub inputs: Array2<f64>,
    /// K x n_y
    pub outputs: Array2<f64>,
}

/// Per-channel mean and standard deviation, inputs first then outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RawDataset {
    pub fn new(name: impl Into<String>, inputs: Array2<f64>, outputs: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} rows, outputs {}",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.nrows() < 2 {
            return Err(Error::InsufficientSamples { needed: 2, available: inputs.nrows() });
        }
        for (row, (u, y)) in inputs.outer_iter().zip(outputs.outer_iter()).enumerate() {
            if let Some(column) = u.iter().chain(y.iter()).position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row, column });
            }
        }
        Ok(Self { name: name.into(), inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_u(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.outputs.ncols()
    }

    /// Splits at `train_rows`: the first rows are training data, the rest test data.
    pub fn split(&self, train_rows: usize) -> Result<(RawDataset, RawDataset)> {
        let k = self.len();
        if train_rows < 2 || k < train_rows + 2 {
            return Err(Error::InsufficientSamples { needed: train_rows.max(2) + 2, available: k });
        }
        let part = |from: usize, to: usize, tag: &str| RawDataset {
            name: format!("{}:{}", self.name, tag),
            inputs: self.inputs.slice(ndarray::s![from..to, ..]).to_owned(),
            outputs: self.outputs.slice(ndarray::s![from..to, ..]).to_owned(),
        };
        Ok((part(0, train_rows, "train"), part(train_rows, k, "test")))
    }

    /// Writes a CSV with columns `u1..u_nu, y1..y_ny`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        let header: Vec<String> = (1..=self.n_u())
            .map(|i| format!("u{i}"))
            .chain((1..=self.n_y()).map(|i| format!("y{i}")))
            .collect();
        w.write_record(&header)?;
        for (u, y) in self.inputs.outer_iter().zip(self.outputs.outer_iter()) {
            let rec: Vec<String> = u.iter().chain(y.iter()).map(|v| format!("{v:?}")).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV whose header names `n_u` input columns followed by `n_y` output columns.
pub fn load_csv(path: impl AsRef<Path>, n_u: usize, n_y: usize) -> Result<RawDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(path)?;
    let width = n_u + n_y;
    let found = rdr.headers()?.len();
    if found != width {
        return Err(Error::HeaderMismatch { expected: width, found });
    }

    let mut values = Vec::new();
    let mut rows = 0usize;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for column in 0..width {
            let v = rec
                .get(column)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or(Error::NonFiniteValue { row, column })?;
            values.push(v);
        }
        if rec.len() > width {
            return Err(Error::HeaderMismatch { expected: width, found: rec.len() });
        }
        rows += 1;
    }
    let all = Array2::from_shape_vec((rows, width), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    RawDataset::new(
        name,
        all.slice(ndarray::s![.., ..n_u]).to_owned(),
        all.slice(ndarray::s![.., n_u..]).to_owned(),
    )
}

/// Population mean/std per channel. Zero-variance channels get std = 1.
pub fn fit_normalizer(train: &RawDataset) -> NormStats {
    let mut mean = Vec::with_capacity(train.n_u() + train.n_y());
    let mut std = Vec::with_capacity(mean.capacity());
    for block in [&train.inputs, &train.outputs] {
        for col in block.axis_iter(Axis(1)) {
            let (m, s) = column_stats(col.iter().copied());
            mean.push(m);
            std.push(s);
        }
    }
    NormStats { mean, std }
}

fn column_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 && std.is_finite() {
        (mean, std)
    } else {
        (mean, 1.0)
    }
}

impl NormStats {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check(&self, ds: &RawDataset) -> Result<()> {
        let width = ds.n_u() + ds.n_y();
        if width != self.len() || self.std.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: width });
        }
        Ok(())
    }

    /// Output-channel std, used to express normalized errors in original units.
    pub fn output_std(&self, n_u: usize) -> &[f64] {
        &self.std[n_u..]
    }

    pub fn output_mean(&self, n_u: usize) -> &[f64] {
        &self.mean[n_u..]
    }

    pub fn denormalize_outputs(&self, n_u: usize, y: &Array2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.output_mean(n_u).to_vec());
        let std = Array1::from(self.output_std(n_u).to_vec());
        y * &std + &mean
    }
}

pub fn normalize(ds: &RawDataset, stats: &NormStats) -> Result<RawDataset> {
    stats.check(ds)?;
    Ok(map_channels(ds, stats, |v, m, s| (v - m) / s))
}

pub fn denormalize(ds: &RawDataset, stats: &NormStats) -> Result<RawDataset> {
    stats.check(ds)?;
    Ok(map_channels(ds, stats, |v, m, s| v * s + m))
}

fn map_channels(ds: &RawDataset, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) -> RawDataset {
    let n_u = ds.n_u();
    let mut out = ds.clone();
    for (j, mut col) in out.inputs.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| f(v, stats.mean[j], stats.std[j]));
    }
    for (j, mut col) in out.outputs.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| f(v, stats.mean[n_u + j], stats.std[n_u + j]));
    }
    out
}

/// Writes a prediction table with columns `k, y_true_*, y_pred_*`.
pub fn write_prediction_csv(
    path: impl AsRef<Path>,
    first_index: usize,
    y_true: &Array2<f64>,
    y_pred: &Array2<f64>,
) -> Result<()> {
    write_predictions(File::create(path)?, first_index, y_true, y_pred)
}

/// [`write_prediction_csv`] to any writer.
pub fn write_predictions(
    out: impl Write,
    first_index: usize,
    y_true: &Array2<f64>,
    y_pred: &Array2<f64>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(out);
    let n_y = y_true.ncols();
    let mut header = vec!["k".to_string()];
    header.extend((1..=n_y).map(|i| format!("y_true_{i}")));
    header.extend((1..=n_y).map(|i| format!("y_pred_{i}")));
    writeln!(f, "{}", header.join(","))?;
    for (i, (t, p)) in y_true.outer_iter().zip(y_pred.outer_iter()).enumerate() {
        let mut row = vec![(first_index + i).to_string()];
        row.extend(t.iter().chain(p.iter()).map(|v| format!("{v:?}")));
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}
