use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::Label;

use super::{DenseDataset, Sample};

/// Per-column min-max scaling fitted on one split and reusable on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// `(v − min) / (max − min)` clamped to `[0, 1]`; zero-range columns map to 0.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    ((v - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Loads a headered numeric CSV, fitting a fresh scaler.
pub fn load_csv(path: &Path, label_column: &str) -> Result<(DenseDataset, MinMaxScaler)> {
    let (rows, labels) = read_rows(path, label_column)?;
    let scaler = MinMaxScaler::fit(&rows);
    let ds = build(path, rows, labels, &scaler)?;
    Ok((ds, scaler))
}

/// Loads a CSV using scaling parameters fitted elsewhere.
pub fn load_csv_with(path: &Path, label_column: &str, scaler: &MinMaxScaler) -> Result<DenseDataset> {
    let (rows, labels) = read_rows(path, label_column)?;
    if let Some(r) = rows.first() {
        if r.len() != scaler.min.len() {
            return Err(Error::Shape {
                expected: scaler.min.len(),
                actual: r.len(),
                context: "CSV feature columns",
            });
        }
    }
    build(path, rows, labels, scaler)
}

fn build(
    path: &Path,
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    scaler: &MinMaxScaler,
) -> Result<DenseDataset> {
    let mut declared = labels.clone();
    declared.sort_unstable();
    declared.dedup();
    let samples = rows
        .iter()
        .zip(labels)
        .map(|(r, label)| Sample {
            values: scaler.transform(r),
            label,
        })
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DenseDataset::new(&name, "csv", declared, samples)
}

fn read_rows(path: &Path, label_column: &str) -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
    let display = path.to_path_buf();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let label_idx = header
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: 1,
            message: format!("no column named {label_column:?}"),
        })?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: display,
                line,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_idx {
                let label = cell.parse::<Label>().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Parse {
                        path: display.clone(),
                        line,
                        message: format!("cell {cell:?} in column {:?} is not numeric", &header[j]),
                    }
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }
    Ok((rows, labels))
}
