//! Sweeps over dimension, fault rate, injection depth, parameter split and
//! online versus offline adaptation.

use std::collections::BTreeMap;
use std::mem::size_of;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SpikeDataset;
use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, PhaseConfig, SpikeHdModel};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultScope {
    #[default]
    HdcOnly,
    SnnOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    /// Zero individual memory entries and SNN weights.
    #[default]
    Parameters,
    /// Zero whole units: every weight into and out of an SNN neuron, or one
    /// hypervector component across all class rows.
    Neurons,
}

/// Copy of `model` with `⌊fraction·count⌋` parameters zeroed, positions
/// drawn uniformly without replacement from `seed`. Parameters from both
/// pools share one index space under [`FaultScope::Both`].
pub fn inject_faults(model: &SpikeHdModel, fraction: f64, scope: FaultScope, seed: u64) -> Result<SpikeHdModel> {
    inject_faults_with(model, fraction, scope, FaultMode::Parameters, seed)
}

pub fn inject_faults_with(
    model: &SpikeHdModel,
    fraction: f64,
    scope: FaultScope,
    mode: FaultMode,
    seed: u64,
) -> Result<SpikeHdModel> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fault fraction {fraction} outside [0, 1]")));
    }
    let mut out = model.clone();
    let hdc = matches!(scope, FaultScope::HdcOnly | FaultScope::Both);
    let snn = matches!(scope, FaultScope::SnnOnly | FaultScope::Both);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        FaultMode::Parameters => {
            let hd_count = if hdc { out.memory().values().len() } else { 0 };
            let layer_counts: Vec<usize> = if snn {
                out.network().layers().iter().map(|l| l.weights().len()).collect()
            } else {
                Vec::new()
            };
            let total = hd_count + layer_counts.iter().sum::<usize>();
            let amount = (fraction * total as f64).floor() as usize;
            let mut picks = sample(&mut rng, total, amount.min(total)).into_vec();
            picks.sort_unstable();
            for p in picks {
                if p < hd_count {
                    out.memory_mut().values_mut()[p] = 0.0;
                    continue;
                }
                let mut rest = p - hd_count;
                for (l, &c) in layer_counts.iter().enumerate() {
                    if rest < c {
                        out.network_mut().layer_mut(l).weights_mut().as_mut_slice()[rest] = 0.0;
                        break;
                    }
                    rest -= c;
                }
            }
        }
        FaultMode::Neurons => {
            let hd_units = if hdc { out.memory().dim() } else { 0 };
            let sizes = if snn { out.network().sizes() } else { Vec::new() };
            let total = hd_units + sizes.iter().sum::<usize>();
            let amount = (fraction * total as f64).floor() as usize;
            let mut picks = sample(&mut rng, total, amount.min(total)).into_vec();
            picks.sort_unstable();
            for p in picks {
                if p < hd_units {
                    let dim = out.memory().dim();
                    let k = out.memory().class_count();
                    let values = out.memory_mut().values_mut();
                    for c in 0..k {
                        values[c * dim + p] = 0.0;
                    }
                    continue;
                }
                let mut rest = p - hd_units;
                for (l, &m) in sizes.iter().enumerate() {
                    if rest < m {
                        let net = out.network_mut();
                        net.layer_mut(l).weights_mut().row_mut(rest).fill(0.0);
                        if l + 1 < sizes.len() {
                            net.layer_mut(l + 1).weights_mut().column_mut(rest).fill(0.0);
                        }
                        break;
                    }
                    rest -= m;
                }
            }
        }
    }
    Ok(out)
}

/// Bytes of state that must be held to keep learning, by adaptation mode.
///
/// Offline co-training holds the weights of layers `1..=depth`, a gradient
/// accumulator of the same size, the class memory, and one sample's
/// per-layer records (traces, membrane, spikes) for back-propagation.
/// Online adaptation holds the class memory, one hypervector and one
/// feature vector.
pub fn trainable_state_bytes(model: &SpikeHdModel, offline: bool, steps: usize) -> usize {
    let f = size_of::<f64>();
    let memory = model.memory().values().len() * f;
    let depth = model.injection_depth();
    let hv = model.memory().dim() * f;
    let features = model.basis().input_dim() * f;
    if !offline {
        return memory + hv + features;
    }
    let layers = &model.network().layers()[..depth];
    let weights: usize = layers.iter().map(|l| l.weights().len()).sum::<usize>() * f;
    let records: usize = layers
        .iter()
        .map(|l| steps * (l.inputs() + 2 * l.neurons()))
        .sum::<usize>()
        * f;
    2 * weights + memory + records + 2 * hv + 2 * features
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Dimension,
    FaultRate,
    InjectionDepth,
    ParamRatio,
    OnlineVsOffline,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Dimension => "dimension",
            SweepAxis::FaultRate => "fault_rate",
            SweepAxis::InjectionDepth => "injection_depth",
            SweepAxis::ParamRatio => "param_ratio",
            SweepAxis::OnlineVsOffline => "online_vs_offline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fault_scope: FaultScope,
    #[serde(default)]
    pub fault_mode: FaultMode,
    /// Total trainable parameters for the parameter-ratio axis.
    #[serde(default = "default_budget")]
    pub param_budget: usize,
    /// Neuron-count ratio of the three-layer network on that axis.
    #[serde(default = "default_shape")]
    pub param_shape: Vec<usize>,
}

fn default_repeats() -> usize {
    5
}

fn default_budget() -> usize {
    10_000
}

fn default_shape() -> Vec<usize> {
    vec![2, 3, 2]
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>, repeats: usize, seed: u64) -> Self {
        Self {
            axis,
            values,
            repeats,
            seed,
            fault_scope: FaultScope::default(),
            fault_mode: FaultMode::default(),
            param_budget: default_budget(),
            param_shape: default_shape(),
        }
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if self.values.is_empty() {
            errors.push(format!("{path}.values: must not be empty"));
        }
        if self.repeats == 0 {
            errors.push(format!("{path}.repeats: must be at least 1"));
        }
        let bad = |pred: &dyn Fn(f64) -> bool| self.values.iter().any(|v| !pred(*v));
        let integral = |v: f64| v >= 1.0 && v.fract() == 0.0;
        match self.axis {
            SweepAxis::Dimension | SweepAxis::InjectionDepth | SweepAxis::OnlineVsOffline => {
                if bad(&integral) {
                    errors.push(format!("{path}.values: must be positive integers"));
                }
            }
            SweepAxis::FaultRate => {
                if bad(&|v| (0.0..=1.0).contains(&v)) {
                    errors.push(format!("{path}.values: fault fractions must lie in [0, 1]"));
                }
            }
            SweepAxis::ParamRatio => {
                if bad(&|v| v > 0.0 && v < 1.0) {
                    errors.push(format!("{path}.values: SNN fractions must lie in (0, 1)"));
                }
            }
        }
        if self.param_shape.is_empty() || self.param_shape.contains(&0) {
            errors.push(format!("{path}.param_shape: must be non-empty and positive"));
        }
        if self.param_budget == 0 {
            errors.push(format!("{path}.param_budget: must be positive"));
        }
    }
}

/// Train and test data with the base model and phase settings.
#[derive(Debug, Clone)]
pub struct SweepTask {
    pub model: ModelConfig,
    pub phases: PhaseConfig,
    pub train: SpikeDataset,
    pub test: SpikeDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

/// Mean and sample standard deviation of one metric at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub axis_value: f64,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl SweepResult {
    pub fn values(&self, axis_value: f64, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.axis_value == axis_value && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, axis_value: f64, metric: &str) -> Option<f64> {
        let v = self.values(axis_value, metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Aggregates in order of first appearance of each (value, metric).
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(f64, String)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(v, m)| *v == r.axis_value && *m == r.metric) {
                keys.push((r.axis_value, r.metric.clone()));
            }
        }
        keys.into_iter()
            .map(|(v, m)| {
                let xs = self.values(v, &m);
                let n = xs.len();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let std = if n > 1 {
                    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                Aggregate {
                    axis_value: v,
                    metric: m,
                    count: n,
                    mean,
                    std,
                }
            })
            .collect()
    }
}

fn repeat_seed(spec: &SweepSpec, repeat: usize) -> u64 {
    seed::derive_indexed(spec.seed, "repeat", repeat as u64)
}

fn phases_for(task: &SweepTask, master: u64) -> PhaseConfig {
    PhaseConfig {
        seed: seed::derive(master, "phases"),
        ..task.phases.clone()
    }
}

fn labels(task: &SweepTask) -> &[u32] {
    &task.train.labels
}

fn step1(task: &SweepTask, config: &ModelConfig, master: u64) -> Result<SpikeHdModel> {
    let mut model = SpikeHdModel::new(config, task.train.channels(), labels(task), master)?;
    model.step1_train_snn(&task.train, None, &phases_for(task, master))?;
    Ok(model)
}

fn finish(task: &SweepTask, mut model: SpikeHdModel, master: u64) -> Result<SpikeHdModel> {
    let cfg = phases_for(task, master);
    model.step2_train_hdc(&task.train, None, &cfg)?;
    if cfg.epochs_step3 > 0 {
        model.step3_cotrain(&task.train, None, &cfg)?;
    }
    Ok(model)
}

fn row(axis_value: f64, repeat: usize, metric: &str, value: f64, wall_clock_s: f64) -> SweepRow {
    SweepRow {
        axis_value,
        repeat,
        metric: metric.to_string(),
        value,
        wall_clock_s,
    }
}

/// Layer sizes and hypervector dimension splitting `budget` parameters so
/// that the SNN holds `fraction` of them.
pub fn param_split(
    fraction: f64,
    budget: usize,
    shape: &[usize],
    input_dim: usize,
    classes: usize,
) -> (Vec<usize>, usize) {
    // SNN weights for scale a: n·r₀a + Σ r_i r_{i+1} a²
    let lin = (input_dim * shape[0]) as f64;
    let quad: f64 = shape.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
    let target = fraction * budget as f64;
    let a = if quad > 0.0 {
        (-lin + (lin * lin + 4.0 * quad * target).sqrt()) / (2.0 * quad)
    } else {
        target / lin
    };
    let sizes = shape
        .iter()
        .map(|r| ((*r as f64 * a).round() as usize).max(1))
        .collect();
    let dim = (((1.0 - fraction) * budget as f64 / classes as f64).round() as usize).max(1);
    (sizes, dim)
}

fn snn_param_count(sizes: &[usize], input_dim: usize) -> usize {
    let mut fan_in = input_dim;
    let mut total = 0;
    for &m in sizes {
        total += m * fan_in;
        fan_in = m;
    }
    total
}

fn retention(acc: f64, base: f64) -> f64 {
    if base > 0.0 {
        acc / base
    } else if acc == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn sweep_repeat(spec: &SweepSpec, task: &SweepTask, repeat: usize) -> Result<Vec<SweepRow>> {
    let master = repeat_seed(spec, repeat);
    let mut rows = Vec::new();
    match spec.axis {
        SweepAxis::Dimension | SweepAxis::InjectionDepth => {
            // Step I does not depend on the encoder, so it is shared.
            let start = Instant::now();
            let base = step1(task, &task.model, master)?;
            let shared = start.elapsed().as_secs_f64();
            for &v in &spec.values {
                let start = Instant::now();
                let (depth, dim) = match spec.axis {
                    SweepAxis::Dimension => (task.model.injection_depth, v as usize),
                    _ => (v as usize, task.model.dim),
                };
                let model = finish(task, base.rebind(depth, dim)?, master)?;
                let acc = model.evaluate(&task.test)?;
                rows.push(row(v, repeat, "test_accuracy", acc, shared + start.elapsed().as_secs_f64()));
            }
        }
        SweepAxis::FaultRate => {
            let start = Instant::now();
            let model = finish(task, step1(task, &task.model, master)?, master)?;
            let shared = start.elapsed().as_secs_f64();
            let base = model.evaluate(&task.test)?;
            for (i, &v) in spec.values.iter().enumerate() {
                let start = Instant::now();
                let faulted = inject_faults_with(
                    &model,
                    v,
                    spec.fault_scope,
                    spec.fault_mode,
                    seed::derive_indexed(master, "faults", i as u64),
                )?;
                let acc = faulted.evaluate(&task.test)?;
                let wall = shared + start.elapsed().as_secs_f64();
                rows.push(row(v, repeat, "test_accuracy", acc, wall));
                rows.push(row(v, repeat, "retention", retention(acc, base), wall));
            }
        }
        SweepAxis::ParamRatio => {
            let n = task.train.channels();
            let k = labels(task).len();
            for &v in &spec.values {
                let start = Instant::now();
                let (sizes, dim) = param_split(v, spec.param_budget, &spec.param_shape, n, k);
                let config = ModelConfig {
                    injection_depth: sizes.len(),
                    sizes: sizes.clone(),
                    dim,
                    ..task.model.clone()
                };
                let model = finish(task, step1(task, &config, master)?, master)?;
                let acc = model.evaluate(&task.test)?;
                let wall = start.elapsed().as_secs_f64();
                rows.push(row(v, repeat, "test_accuracy", acc, wall));
                rows.push(row(v, repeat, "snn_params", snn_param_count(&sizes, n) as f64, wall));
                rows.push(row(v, repeat, "hdc_params", (dim * k) as f64, wall));
            }
        }
        SweepAxis::OnlineVsOffline => {
            for &v in &spec.values {
                let cmp = compare_online_offline(master, task, v as usize)?;
                rows.extend(cmp.rows(v, repeat));
            }
        }
    }
    Ok(rows)
}

/// Runs every (value, repeat) cycle. Repeats run in parallel on the current
/// rayon pool; rows are ordered by value, then repeat, then metric.
pub fn run_sweep(spec: &SweepSpec, task: &SweepTask) -> Result<SweepResult> {
    let mut errors = Vec::new();
    spec.validate("sweep", &mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let per_repeat: Vec<Vec<SweepRow>> = (0..spec.repeats)
        .into_par_iter()
        .map(|r| sweep_repeat(spec, task, r))
        .collect::<Result<_>>()?;
    let value_rank: BTreeMap<u64, usize> = spec
        .values
        .iter()
        .enumerate()
        .rev()
        .map(|(i, v)| (v.to_bits(), i))
        .collect();
    let mut rows: Vec<(usize, usize, SweepRow)> = per_repeat
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, r)| (value_rank[&r.axis_value.to_bits()], i, r))
        .collect();
    rows.sort_by_key(|(v, i, r)| (*v, r.repeat, *i));
    Ok(SweepResult {
        axis: spec.axis,
        rows: rows.into_iter().map(|(_, _, r)| r).collect(),
    })
}

/// One branch of an online/offline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub final_accuracy: f64,
    pub wall_clock_s: f64,
    pub peak_trainable_bytes: usize,
    /// `(seconds since branch start, test accuracy)` after each epoch.
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineOfflineComparison {
    pub warmup: usize,
    pub warmup_accuracy: f64,
    pub offline: BranchOutcome,
    pub online: BranchOutcome,
}

impl OnlineOfflineComparison {
    fn rows(&self, axis_value: f64, repeat: usize) -> Vec<SweepRow> {
        let (off, on) = (&self.offline, &self.online);
        vec![
            row(axis_value, repeat, "offline_accuracy", off.final_accuracy, off.wall_clock_s),
            row(axis_value, repeat, "online_accuracy", on.final_accuracy, on.wall_clock_s),
            row(axis_value, repeat, "offline_seconds", off.wall_clock_s, off.wall_clock_s),
            row(axis_value, repeat, "online_seconds", on.wall_clock_s, on.wall_clock_s),
            row(axis_value, repeat, "offline_peak_bytes", off.peak_trainable_bytes as f64, off.wall_clock_s),
            row(axis_value, repeat, "online_peak_bytes", on.peak_trainable_bytes as f64, on.wall_clock_s),
        ]
    }
}

/// Shared Steps I and II on the first `warmup` training samples, then the
/// remainder goes either through Step III (offline, `epochs_step3` epochs)
/// or a single online pass.
pub fn compare_online_offline(model_seed: u64, task: &SweepTask, warmup: usize) -> Result<OnlineOfflineComparison> {
    if warmup == 0 || warmup >= task.train.len() {
        return Err(Error::InvalidArgument(format!(
            "warmup {warmup} must lie in 1..{}",
            task.train.len()
        )));
    }
    let cfg = phases_for(task, model_seed);
    let head = task.train.subset(0..warmup);
    let rest = task.train.subset(warmup..task.train.len());
    let mut model = SpikeHdModel::new(&task.model, task.train.channels(), labels(task), model_seed)?;
    model.step1_train_snn(&head, None, &cfg)?;
    model.step2_train_hdc(&head, None, &cfg)?;
    let warmup_accuracy = model.evaluate(&task.test)?;
    let steps = task.train.samples.first().map_or(0, |(t, _)| t.steps());

    let mut offline = model.clone();
    let mut curve = Vec::new();
    let mut elapsed = 0.0;
    let mut clock = Instant::now();
    offline.step3_cotrain_with(&rest, None, &cfg, |_, m| {
        elapsed += clock.elapsed().as_secs_f64();
        curve.push((elapsed, m.evaluate_unchecked(&task.test)?));
        clock = Instant::now();
        Ok(())
    })?;
    let offline_wall = curve.last().map_or(0.0, |c| c.0);
    let offline_outcome = BranchOutcome {
        final_accuracy: curve.last().map_or(warmup_accuracy, |c| c.1),
        wall_clock_s: offline_wall,
        peak_trainable_bytes: trainable_state_bytes(&offline, true, steps),
        curve,
    };

    let mut online = model;
    let start = Instant::now();
    online.online_update(rest.samples.iter().cloned(), &cfg.hd)?;
    let online_wall = start.elapsed().as_secs_f64();
    let online_acc = online.evaluate(&task.test)?;
    let online_outcome = BranchOutcome {
        final_accuracy: online_acc,
        wall_clock_s: online_wall,
        peak_trainable_bytes: trainable_state_bytes(&online, false, steps),
        curve: vec![(online_wall, online_acc)],
    };
    Ok(OnlineOfflineComparison {
        warmup,
        warmup_accuracy,
        offline: offline_outcome,
        online: online_outcome,
    })
}
