use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One row of the metrics table.
///
/// `epoch` counts epochs for supervised runs, EKI iterations for the
/// semi-supervised task and processed samples for online runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub train_metric: f64,
    pub test_metric: f64,
    /// Seconds since the start of the run; zero when timing is disabled.
    pub wall_time: f64,
    pub ensemble_size: usize,
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "train_metric", "test_metric", "wall_time", "ensemble_size"];

impl MetricsRecord {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !self.train_metric.is_finite() || !self.test_metric.is_finite() || !self.wall_time.is_finite() {
            return Err(HarnessError::Metric(format!("non-finite metric in record {self:?}")));
        }
        Ok(())
    }
}

/// Streams records as CSV with a header row.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Result<Self, HarnessError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(METRICS_HEADER)?;
        inner.flush().map_err(csv::Error::from)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<(), HarnessError> {
        self.inner.serialize(record)?;
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, HarnessError> {
        self.inner
            .into_inner()
            .map_err(|e| HarnessError::Metric(format!("flushing metrics: {e}")))
    }
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != METRICS_HEADER {
        return Err(HarnessError::Metric(format!("unexpected metrics header {header:?}")));
    }
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Fraction of matching class indices.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64, HarnessError> {
    if predictions.len() != truth.len() {
        return Err(HarnessError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(HarnessError::Shape("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean over samples of `‖pred − truth‖²`, both stored row-major with `dim`
/// values per sample.
pub fn test_error(pred: &[f64], truth: &[f64], dim: usize) -> Result<f64, HarnessError> {
    if pred.len() != truth.len() || dim == 0 || pred.len() % dim != 0 {
        return Err(HarnessError::Shape(format!(
            "predictions of length {} and targets of length {} with dimension {dim}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(HarnessError::Shape("test error of an empty set".into()));
    }
    let n = pred.len() / dim;
    let total: f64 = pred
        .chunks_exact(dim)
        .zip(truth.chunks_exact(dim))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

/// Index of the largest entry; the first wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
