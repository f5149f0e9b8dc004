//! Run artifacts: metric CSVs, JSON summaries and plot descriptions.
//!
//! Every file carries the config hash: CSVs in a leading `config_hash`
//! column, JSON files in a top-level field. Metric CSVs never contain
//! wall-clock values, so seeded reruns reproduce them byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{Aggregate, SweepResult};
use crate::config::RunConfig;
use crate::error::Result;
use crate::memory::Label;
use crate::pipeline::AccuracyLog;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything `train` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub resolved_config: RunConfig,
    pub logs: Vec<AccuracyLog>,
    /// Accuracy of the finished model on each split.
    pub final_accuracy: BTreeMap<String, f64>,
    pub phase_seconds: BTreeMap<String, f64>,
    pub checkpoint: Option<PathBuf>,
}

/// Outcome of `eval` on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub split: String,
    pub samples: usize,
    pub accuracy: f64,
    pub labels: Vec<Label>,
    /// `confusion[i][j]`: samples of class `labels[i]` predicted as `labels[j]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<(Label, Label)>,
}

impl EvalReport {
    pub fn new(config_hash: &str, split: &str, labels: &[Label], predictions: Vec<(Label, Label)>) -> Self {
        let k = labels.len();
        let pos = |l: Label| labels.iter().position(|x| *x == l).unwrap_or(0);
        let mut confusion = vec![vec![0; k]; k];
        let mut hits = 0;
        for &(truth, pred) in &predictions {
            confusion[pos(truth)][pos(pred)] += 1;
            hits += (truth == pred) as usize;
        }
        let samples = predictions.len();
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            split: split.to_string(),
            samples,
            accuracy: if samples == 0 { 0.0 } else { hits as f64 / samples as f64 },
            labels: labels.to_vec(),
            confusion,
            predictions,
        }
    }
}

/// JSON summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub axis: String,
    pub aggregates: Vec<Aggregate>,
}

/// Renderer-neutral plot description: one series per metric, one point
/// per CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub schema_version: u32,
    pub config_hash: String,
    pub axes: PlotAxes,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotAxes {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub repeat: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `config_hash,step,epoch,train_accuracy,test_accuracy,mean_loss`
pub fn write_epoch_csv(path: &Path, hash: &str, logs: &[AccuracyLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_hash", "step", "epoch", "train_accuracy", "test_accuracy", "mean_loss"])?;
    for log in logs {
        for e in &log.epochs {
            w.write_record([
                hash,
                &log.step,
                &e.epoch.to_string(),
                &e.train_accuracy.to_string(),
                &opt(e.test_accuracy),
                &opt(e.mean_loss),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `config_hash,split,accuracy`
pub fn write_final_csv(path: &Path, hash: &str, accuracy: &BTreeMap<String, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_hash", "split", "accuracy"])?;
    for (split, acc) in accuracy {
        w.write_record([hash, split, &acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_metrics.csv`, `<prefix>_confusion.csv` and
/// `<prefix>_predictions.csv` into `dir`.
pub fn write_eval(dir: &Path, prefix: &str, report: &EvalReport) -> Result<()> {
    let hash = report.config_hash.as_str();
    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}_metrics.csv")))?;
    w.write_record(["config_hash", "split", "samples", "accuracy"])?;
    w.write_record([
        hash,
        &report.split,
        &report.samples.to_string(),
        &report.accuracy.to_string(),
    ])?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}_confusion.csv")))?;
    w.write_record(["config_hash", "true_label", "predicted_label", "count"])?;
    for (i, row) in report.confusion.iter().enumerate() {
        for (j, count) in row.iter().enumerate() {
            w.write_record([
                hash,
                &report.labels[i].to_string(),
                &report.labels[j].to_string(),
                &count.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(format!("{prefix}_predictions.csv")))?;
    w.write_record(["config_hash", "index", "label", "predicted"])?;
    for (i, (truth, pred)) in report.predictions.iter().enumerate() {
        w.write_record([hash, &i.to_string(), &truth.to_string(), &pred.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `config_hash,axis,axis_value,repeat,metric,value`
pub fn write_sweep_csv(path: &Path, hash: &str, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_hash", "axis", "axis_value", "repeat", "metric", "value"])?;
    for r in &result.rows {
        w.write_record([
            hash,
            result.axis.name(),
            &r.axis_value.to_string(),
            &r.repeat.to_string(),
            &r.metric,
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `config_hash,axis_value,repeat,metric,wall_clock_s`
pub fn write_timing_csv(path: &Path, hash: &str, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_hash", "axis_value", "repeat", "metric", "wall_clock_s"])?;
    for r in &result.rows {
        w.write_record([
            hash,
            &r.axis_value.to_string(),
            &r.repeat.to_string(),
            &r.metric,
            &r.wall_clock_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_summary(hash: &str, result: &SweepResult) -> SweepSummary {
    SweepSummary {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        axis: result.axis.name().to_string(),
        aggregates: result.aggregates(),
    }
}

pub fn plot_spec(hash: &str, result: &SweepResult) -> PlotSpec {
    let mut series: Vec<PlotSeries> = Vec::new();
    for r in &result.rows {
        let point = PlotPoint {
            x: r.axis_value,
            y: r.value,
            repeat: r.repeat,
        };
        match series.iter_mut().find(|s| s.name == r.metric) {
            Some(s) => s.points.push(point),
            None => series.push(PlotSeries {
                name: r.metric.clone(),
                points: vec![point],
            }),
        }
    }
    PlotSpec {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        axes: PlotAxes {
            x: result.axis.name().to_string(),
            y: "value".into(),
        },
        series,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Short human-readable account of a train run.
pub fn summary_text(report: &RunReport) -> String {
    let mut out = format!("config {}\n", report.config_hash);
    for log in &report.logs {
        match log.last() {
            Some(e) => out.push_str(&format!(
                "{}: {} epochs, train {:.4}, test {}\n",
                log.step,
                log.epochs.len(),
                e.train_accuracy,
                e.test_accuracy.map_or("-".into(), |t| format!("{t:.4}")),
            )),
            None => out.push_str(&format!("{}: no epochs\n", log.step)),
        }
        for w in &log.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
    }
    for (split, acc) in &report.final_accuracy {
        out.push_str(&format!("final {split} accuracy {acc:.4}\n"));
    }
    for (phase, s) in &report.phase_seconds {
        out.push_str(&format!("{phase} took {s:.2}s\n"));
    }
    out
}
