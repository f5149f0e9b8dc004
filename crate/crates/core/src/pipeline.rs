//! Three-phase training of the joint model and the frozen-SNN online mode.
//!
//! Step I trains the SNN on its layer-local readout losses. Step II freezes
//! the SNN and trains the class memory on encoded activity of layer
//! `injection_depth`. Step III trains both, sending the memory's loss
//! gradient back through the encoder into the SNN.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{write_file, Decoder, Encoder};
use crate::data::SpikeDataset;
use crate::encoder::{Activation, BackpropMode, EncoderBasis, Hypervector};
use crate::error::{Error, Result};
use crate::memory::{argmax, ClassMemory, HdTrainConfig, Label};
use crate::seed;
use crate::snn::{
    injected_gradients, layer_activity, layer_local_gradient, LifNetwork, LifParams, Pooling,
    SimMode, DEFAULT_SIZES,
};
use crate::spikes::SpikeTrain;

const MODEL_MAGIC: &[u8; 4] = b"SHDK";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fresh,
    Step1Done,
    Step2Done,
    Step3Done,
}

impl Phase {
    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Phase::Fresh,
            1 => Phase::Step1Done,
            2 => Phase::Step2Done,
            3 => Phase::Step3Done,
            t => return Err(Error::Format(format!("unknown phase tag {t}"))),
        })
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Fresh => "fresh",
            Phase::Step1Done => "step1_done",
            Phase::Step2Done => "step2_done",
            Phase::Step3Done => "step3_done",
        })
    }
}

/// Architecture of the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sizes: Vec<usize>,
    pub lif: LifParams,
    /// Weight bound multiplier: entries are `U(±init_scale/√fan_in)`.
    pub init_scale: f64,
    /// Hypervector dimension `D`.
    pub dim: usize,
    pub activation: Activation,
    pub sigma: f64,
    /// 1-based SNN layer feeding the encoder.
    pub injection_depth: usize,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            lif: LifParams::default(),
            init_scale: 0.6,
            dim: 4000,
            activation: Activation::Tanh,
            sigma: 0.3,
            injection_depth: 4,
            pooling: Pooling::MeanRate,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            errors.push(format!("{path}.sizes: need at least one layer, all sizes positive"));
        }
        self.lif.validate(&format!("{path}.lif"), errors);
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            errors.push(format!("{path}.init_scale: must be positive"));
        }
        if self.dim == 0 {
            errors.push(format!("{path}.dim: must be positive"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            errors.push(format!("{path}.sigma: must be positive"));
        }
        if self.injection_depth == 0 || self.injection_depth > self.sizes.len() {
            errors.push(format!(
                "{path}.injection_depth: must lie in 1..={}, got {}",
                self.sizes.len(),
                self.injection_depth
            ));
        }
    }
}

/// How often Step III applies the memory update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpdatePeriod {
    /// Update during every `n`-th batch.
    Every(usize),
    /// The string `"never"`.
    Never(Never),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Never {
    Never,
}

impl UpdatePeriod {
    pub const NEVER: UpdatePeriod = UpdatePeriod::Never(Never::Never);

    fn fires(self, batch: usize) -> bool {
        match self {
            UpdatePeriod::Every(n) => n > 0 && (batch + 1) % n == 0,
            UpdatePeriod::Never(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub epochs_step1: usize,
    pub epochs_step2: usize,
    pub epochs_step3: usize,
    pub snn_lr: f64,
    pub cotrain_snn_lr: f64,
    pub hd: HdTrainConfig,
    pub hd_update_period: UpdatePeriod,
    pub backproject_mode: BackpropMode,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            epochs_step1: 20,
            epochs_step2: 10,
            epochs_step3: 10,
            snn_lr: 0.03,
            cotrain_snn_lr: 0.01,
            hd: HdTrainConfig::default(),
            hd_update_period: UpdatePeriod::Every(1),
            backproject_mode: BackpropMode::ChainRule,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if !(self.snn_lr.is_finite() && self.snn_lr >= 0.0) {
            errors.push(format!("{path}.snn_lr: must be non-negative"));
        }
        if !(self.cotrain_snn_lr.is_finite() && self.cotrain_snn_lr >= 0.0) {
            errors.push(format!("{path}.cotrain_snn_lr: must be non-negative"));
        }
        self.hd.validate(&format!("{path}.hd"), errors);
        if self.hd_update_period == UpdatePeriod::Every(0) {
            errors.push(format!("{path}.hd_update_period: must be at least 1 or \"never\""));
        }
        if self.batch_size == 0 {
            errors.push(format!("{path}.batch_size: must be at least 1"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running accuracy over the epoch's training stream.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyLog {
    pub step: String,
    pub epochs: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl AccuracyLog {
    fn new(step: &str) -> Self {
        Self {
            step: step.to_string(),
            ..Self::default()
        }
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }
}

/// SNN front end, encoder and class memory joined at `injection_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeHdModel {
    config: ModelConfig,
    network: LifNetwork,
    basis: EncoderBasis,
    memory: ClassMemory,
    phase: Phase,
}

fn shuffled(len: usize, master: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(master, "epoch-order", epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn accuracy(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

impl SpikeHdModel {
    /// Builds an untrained model for `input_dim` channels and `labels`.
    pub fn new(config: &ModelConfig, input_dim: usize, labels: &[Label], master_seed: u64) -> Result<Self> {
        let mut errors = Vec::new();
        config.validate("model", &mut errors);
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let network = LifNetwork::new(
            input_dim,
            &config.sizes,
            labels.len(),
            config.lif,
            seed::derive(master_seed, "snn-weights"),
            seed::derive(master_seed, "snn-readout"),
            config.init_scale,
        )?;
        let basis = EncoderBasis::with_bandwidth(
            config.sizes[config.injection_depth - 1],
            config.dim,
            config.activation,
            seed::derive(master_seed, "basis"),
            config.sigma,
        )?;
        let memory = ClassMemory::new(labels, config.dim)?;
        Self::assemble(config.clone(), network, basis, memory, Phase::Fresh)
    }

    fn assemble(
        config: ModelConfig,
        network: LifNetwork,
        basis: EncoderBasis,
        memory: ClassMemory,
        phase: Phase,
    ) -> Result<Self> {
        let depth = config.injection_depth;
        if depth == 0 || depth > network.depth() {
            return Err(Error::InvalidArgument(format!(
                "injection depth {depth} outside 1..={}",
                network.depth()
            )));
        }
        if basis.input_dim() != network.layer(depth - 1).neurons() {
            return Err(Error::Shape {
                expected: network.layer(depth - 1).neurons(),
                actual: basis.input_dim(),
                context: "encoder input width at the injection layer",
            });
        }
        if memory.dim() != basis.dim() {
            return Err(Error::Shape {
                expected: basis.dim(),
                actual: memory.dim(),
                context: "class memory dimension",
            });
        }
        if memory.class_count() != network.classes() {
            return Err(Error::Shape {
                expected: network.classes(),
                actual: memory.class_count(),
                context: "class count",
            });
        }
        Ok(Self {
            config,
            network,
            basis,
            memory,
            phase,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &LifNetwork {
        &self.network
    }

    pub fn basis(&self) -> &EncoderBasis {
        &self.basis
    }

    pub fn memory(&self) -> &ClassMemory {
        &self.memory
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn injection_depth(&self) -> usize {
        self.config.injection_depth
    }

    pub fn pooling(&self) -> Pooling {
        self.config.pooling
    }

    pub fn labels(&self) -> &[Label] {
        self.memory.labels()
    }

    /// True when the encoder reads the last SNN layer.
    pub fn injects_at_final_layer(&self) -> bool {
        self.config.injection_depth == self.network.depth()
    }

    pub(crate) fn network_mut(&mut self) -> &mut LifNetwork {
        &mut self.network
    }

    pub(crate) fn memory_mut(&mut self) -> &mut ClassMemory {
        &mut self.memory
    }

    /// Copy that keeps the trained network but joins a fresh encoder of
    /// dimension `dim` at `injection_depth`. The basis seed is kept, so the
    /// result equals a model built with that configuration and trained
    /// through Step I only. Requires phase `step1_done`.
    pub fn rebind(&self, injection_depth: usize, dim: usize) -> Result<Self> {
        self.require("rebind", self.phase == Phase::Step1Done, "step1_done")?;
        let mut config = self.config.clone();
        config.injection_depth = injection_depth;
        config.dim = dim;
        let mut errors = Vec::new();
        config.validate("model", &mut errors);
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let basis = EncoderBasis::with_bandwidth(
            config.sizes[injection_depth - 1],
            dim,
            config.activation,
            self.basis.seed(),
            config.sigma,
        )?;
        let memory = ClassMemory::new(self.memory.labels(), dim)?;
        Self::assemble(config, self.network.clone(), basis, memory, self.phase)
    }

    fn require(&self, operation: &'static str, ok: bool, required: &'static str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Phase {
                operation,
                required,
                actual: self.phase.to_string(),
            })
        }
    }

    fn check_dataset(&self, data: &SpikeDataset) -> Result<()> {
        if let Some((train, _)) = data.samples.first() {
            if train.channels() != self.network.input_dim() {
                return Err(Error::Shape {
                    expected: self.network.input_dim(),
                    actual: train.channels(),
                    context: "dataset channels",
                });
            }
        }
        for (_, label) in &data.samples {
            self.memory.index_of(*label)?;
        }
        Ok(())
    }

    fn class_index(&self, label: Label) -> usize {
        // labels were validated by check_dataset
        self.memory.index_of(label).unwrap_or(0)
    }

    /// Pooled activity of the injection layer, simulated in evaluation mode
    /// from a fresh state.
    pub fn features(&self, train: &SpikeTrain) -> Result<Vec<f64>> {
        let depth = self.config.injection_depth;
        let mut state = self.network.fresh_state();
        let rec = self.network.simulate_with(&mut state, train, SimMode::Eval, depth)?;
        layer_activity(&rec, depth, self.config.pooling)
    }

    fn encode_features(&self, features: &[f64]) -> Result<Hypervector> {
        self.basis.encode(features)
    }

    /// Encoder plus memory lookup on precomputed features.
    pub fn classify_features(&self, features: &[f64]) -> Result<Label> {
        let h = self.encode_features(features)?;
        self.memory.predict(&h)
    }

    /// Simulate, pool, encode, predict.
    pub fn predict_end_to_end(&self, train: &SpikeTrain) -> Result<Label> {
        self.require(
            "predict_end_to_end",
            self.phase >= Phase::Step2Done,
            "step2_done or later",
        )?;
        self.classify_features(&self.features(train)?)
    }

    /// Accuracy of [`SpikeHdModel::predict_end_to_end`] over a dataset.
    pub fn evaluate(&self, data: &SpikeDataset) -> Result<f64> {
        self.require("evaluate", self.phase >= Phase::Step2Done, "step2_done or later")?;
        let features = self.all_features(data)?;
        self.features_accuracy(&features, data)
    }

    fn all_features(&self, data: &SpikeDataset) -> Result<Vec<Vec<f64>>> {
        data.samples
            .par_iter()
            .map(|(train, _)| self.features(train))
            .collect()
    }

    fn features_accuracy(&self, features: &[Vec<f64>], data: &SpikeDataset) -> Result<f64> {
        let hits: Vec<bool> = features
            .par_iter()
            .zip(&data.samples)
            .map(|(f, (_, label))| Ok(self.classify_features(f)? == *label))
            .collect::<Result<_>>()?;
        Ok(accuracy(hits.iter().filter(|h| **h).count(), hits.len()))
    }

    /// Argmax of the final layer's time-averaged readout. Used only to
    /// measure the SNN on its own before the memory takes over prediction.
    pub fn snn_readout_predict(&self, train: &SpikeTrain) -> Result<Label> {
        let mut state = self.network.fresh_state();
        let rec = self
            .network
            .simulate_with(&mut state, train, SimMode::Eval, self.network.depth())?;
        let last = rec.layers.last().expect("network has layers");
        Ok(self.memory.labels()[argmax(&last.mean_readout())])
    }

    pub fn snn_readout_accuracy(&self, data: &SpikeDataset) -> Result<f64> {
        let hits: Vec<bool> = data
            .samples
            .par_iter()
            .map(|(train, label)| Ok(self.snn_readout_predict(train)? == *label))
            .collect::<Result<_>>()?;
        Ok(accuracy(hits.iter().filter(|h| **h).count(), hits.len()))
    }

    /// Step I: every layer descends its own readout loss on mini-batches.
    pub fn step1_train_snn(
        &mut self,
        train: &SpikeDataset,
        test: Option<&SpikeDataset>,
        cfg: &PhaseConfig,
    ) -> Result<AccuracyLog> {
        self.require("step1_train_snn", self.phase == Phase::Fresh, "fresh")?;
        self.check_dataset(train)?;
        if let Some(t) = test {
            self.check_dataset(t)?;
        }
        let mut log = AccuracyLog::new("step1");
        if cfg.epochs_step1 == 0 {
            log.warnings.push("step1 ran for 0 epochs; SNN weights are untrained".into());
            log::warn!("step1 ran for 0 epochs");
        }
        let classes = self.memory.class_count();
        let depth = self.network.depth();
        for epoch in 0..cfg.epochs_step1 {
            let order = shuffled(train.len(), cfg.seed, epoch);
            let (mut hits, mut loss_sum) = (0usize, 0.0);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let net = &self.network;
                let per_sample: Vec<(Vec<DMatrix<f64>>, bool, f64)> = batch
                    .par_iter()
                    .map(|&i| {
                        let (spikes, label) = &train.samples[i];
                        let class = self.class_index(*label);
                        let mut target = vec![0.0; classes];
                        target[class] = 1.0;
                        let mode = SimMode::Train {
                            seed: seed::derive_indexed(cfg.seed, &format!("dropout-{epoch}"), i as u64),
                        };
                        let mut state = net.fresh_state();
                        let rec = net.simulate_with(&mut state, spikes, mode, depth)?;
                        let mut grads = Vec::with_capacity(depth);
                        let mut loss = 0.0;
                        for (l, r) in rec.layers.iter().enumerate() {
                            let (ll, g) = layer_local_gradient(net.layer(l), r, &target)?;
                            loss += ll;
                            grads.push(g);
                        }
                        let top = rec.layers.last().expect("network has layers");
                        let correct = argmax(&top.mean_readout()) == class;
                        Ok((grads, correct, loss))
                    })
                    .collect::<Result<_>>()?;
                let scale = cfg.snn_lr / batch.len() as f64;
                let mut sums: Option<Vec<DMatrix<f64>>> = None;
                for (grads, correct, loss) in per_sample {
                    hits += correct as usize;
                    loss_sum += loss;
                    match sums.as_mut() {
                        None => sums = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&grads) {
                                *a += g;
                            }
                        }
                    }
                }
                if scale != 0.0 {
                    for (l, g) in sums.unwrap_or_default().iter().enumerate() {
                        *self.network.layer_mut(l).weights_mut() -= g * scale;
                    }
                }
            }
            let test_accuracy = test.map(|t| self.snn_readout_accuracy(t)).transpose()?;
            log.epochs.push(EpochRecord {
                epoch,
                train_accuracy: accuracy(hits, train.len()),
                test_accuracy,
                mean_loss: Some(loss_sum / train.len().max(1) as f64),
            });
        }
        self.phase = Phase::Step1Done;
        Ok(log)
    }

    /// Step II: frozen SNN, per-sample memory updates over `epochs_step2`
    /// passes.
    pub fn step2_train_hdc(
        &mut self,
        train: &SpikeDataset,
        test: Option<&SpikeDataset>,
        cfg: &PhaseConfig,
    ) -> Result<AccuracyLog> {
        self.require("step2_train_hdc", self.phase == Phase::Step1Done, "step1_done")?;
        self.check_dataset(train)?;
        if let Some(t) = test {
            self.check_dataset(t)?;
        }
        if self.injects_at_final_layer() {
            log::warn!("injection at the final SNN layer");
        }
        let mut log = AccuracyLog::new("step2");
        if self.injects_at_final_layer() {
            log.warnings.push("encoder reads the final SNN layer".into());
        }
        let encoded: Vec<Hypervector> = self
            .all_features(train)?
            .par_iter()
            .map(|f| self.encode_features(f))
            .collect::<Result<_>>()?;
        let test_features = test.map(|t| self.all_features(t)).transpose()?;
        for epoch in 0..cfg.epochs_step2 {
            let order = shuffled(train.len(), cfg.seed, epoch);
            let mut hits = 0;
            for &i in &order {
                let out = self.memory.update_single(&encoded[i], train.samples[i].1, &cfg.hd)?;
                hits += out.correct as usize;
            }
            let test_accuracy = match (&test_features, test) {
                (Some(f), Some(t)) => Some(self.features_accuracy(f, t)?),
                _ => None,
            };
            log.epochs.push(EpochRecord {
                epoch,
                train_accuracy: accuracy(hits, train.len()),
                test_accuracy,
                mean_loss: None,
            });
        }
        self.phase = Phase::Step2Done;
        Ok(log)
    }

    /// Step III: the memory loss gradient is back-projected to the injection
    /// layer and pushed into the SNN once per batch; the memory itself is
    /// updated during every `hd_update_period`-th batch.
    pub fn step3_cotrain(
        &mut self,
        train: &SpikeDataset,
        test: Option<&SpikeDataset>,
        cfg: &PhaseConfig,
    ) -> Result<AccuracyLog> {
        self.step3_cotrain_with(train, test, cfg, |_, _| Ok(()))
    }

    /// [`SpikeHdModel::step3_cotrain`] calling `after_epoch(epoch, model)`
    /// once each epoch's updates are applied, before test evaluation.
    pub fn step3_cotrain_with<F>(
        &mut self,
        train: &SpikeDataset,
        test: Option<&SpikeDataset>,
        cfg: &PhaseConfig,
        mut after_epoch: F,
    ) -> Result<AccuracyLog>
    where
        F: FnMut(usize, &SpikeHdModel) -> Result<()>,
    {
        self.require("step3_cotrain", self.phase == Phase::Step2Done, "step2_done")?;
        self.check_dataset(train)?;
        if let Some(t) = test {
            self.check_dataset(t)?;
        }
        let depth = self.config.injection_depth;
        let pooling = self.config.pooling;
        let mut log = AccuracyLog::new("step3");
        for epoch in 0..cfg.epochs_step3 {
            let order = shuffled(train.len(), cfg.seed, epoch);
            let (mut hits, mut loss_sum) = (0usize, 0.0);
            for (b, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
                let update_memory = cfg.hd_update_period.fires(b);
                let mut sums: Option<Vec<DMatrix<f64>>> = None;
                for &i in batch {
                    let (spikes, label) = &train.samples[i];
                    let mut state = self.network.fresh_state();
                    let rec = self.network.simulate_with(&mut state, spikes, SimMode::Eval, depth)?;
                    let f = layer_activity(&rec, depth, pooling)?;
                    let h = self.encode_features(&f)?;
                    let (loss, grad_h) = self.memory.loss_and_gradient(&h, *label)?;
                    loss_sum += loss;
                    let correct = if update_memory {
                        self.memory.update_single(&h, *label, &cfg.hd)?.correct
                    } else {
                        self.memory.predict(&h)? == *label
                    };
                    hits += correct as usize;
                    if cfg.cotrain_snn_lr != 0.0 {
                        let grad_f = self.basis.backproject(&grad_h, &h, cfg.backproject_mode)?;
                        let grads = injected_gradients(&self.network, depth, &grad_f, &rec, pooling)?;
                        match sums.as_mut() {
                            None => sums = Some(grads),
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&grads) {
                                    *a += g;
                                }
                            }
                        }
                    }
                }
                if let Some(sums) = sums {
                    let scale = cfg.cotrain_snn_lr / batch.len() as f64;
                    for (l, g) in sums.iter().enumerate() {
                        *self.network.layer_mut(l).weights_mut() -= g * scale;
                    }
                }
            }
            after_epoch(epoch, self)?;
            let test_accuracy = test.map(|t| self.evaluate_unchecked(t)).transpose()?;
            log.epochs.push(EpochRecord {
                epoch,
                train_accuracy: accuracy(hits, train.len()),
                test_accuracy,
                mean_loss: Some(loss_sum / train.len().max(1) as f64),
            });
        }
        self.phase = Phase::Step3Done;
        Ok(log)
    }

    pub(crate) fn evaluate_unchecked(&self, data: &SpikeDataset) -> Result<f64> {
        let features = self.all_features(data)?;
        self.features_accuracy(&features, data)
    }

    /// Single pass over `stream` updating only the class memory. Nothing is
    /// retained once a sample has been consumed.
    pub fn online_update<I>(&mut self, stream: I, cfg: &HdTrainConfig) -> Result<AccuracyLog>
    where
        I: IntoIterator<Item = (SpikeTrain, Label)>,
    {
        self.require("online_update", self.phase >= Phase::Step2Done, "step2_done or later")?;
        let (mut hits, mut seen) = (0usize, 0usize);
        for (train, label) in stream {
            let h = self.encode_features(&self.features(&train)?)?;
            hits += self.memory.update_single(&h, label, cfg)?.correct as usize;
            seen += 1;
        }
        let mut log = AccuracyLog::new("online");
        log.epochs.push(EpochRecord {
            epoch: 0,
            train_accuracy: accuracy(hits, seen),
            test_accuracy: None,
            mean_loss: None,
        });
        Ok(log)
    }

    /// Layout: `"SHDK"`, `u32` version, `u8` phase, then four length-prefixed
    /// blobs: model config as TOML, network, basis, memory.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = toml::to_string(&self.config)
            .map_err(|e| Error::Format(format!("cannot serialize model config: {e}")))?;
        let mut enc = Encoder::new(MODEL_MAGIC, MODEL_VERSION);
        enc.u8(self.phase.tag())
            .blob(config.as_bytes())
            .blob(&self.network.to_bytes())
            .blob(&self.basis.to_bytes())
            .blob(&self.memory.to_bytes());
        Ok(enc.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MODEL_MAGIC, MODEL_VERSION)?;
        let phase = Phase::from_tag(dec.u8()?)?;
        let config_text = std::str::from_utf8(dec.blob()?)
            .map_err(|_| Error::Format("model config is not UTF-8".into()))?;
        let config: ModelConfig = toml::from_str(config_text)
            .map_err(|e| Error::Format(format!("bad model config: {e}")))?;
        let network = LifNetwork::from_bytes(dec.blob()?)?;
        let basis = EncoderBasis::from_bytes(dec.blob()?)?;
        let memory = ClassMemory::from_bytes(dec.blob()?)?;
        dec.finish()?;
        Self::assemble(config, network, basis, memory, phase)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, RateCodeConfig};

    fn task() -> (SpikeDataset, SpikeDataset) {
        let ds = synth_blobs(3, 16, 20, 0.1, 3).unwrap();
        let (train, test) = ds.split_at(45);
        let rc = |seed| RateCodeConfig {
            steps: 30,
            max_rate: 0.6,
            seed,
        };
        (
            SpikeDataset::from_dense(&train, &rc(1)).unwrap(),
            SpikeDataset::from_dense(&test, &rc(2)).unwrap(),
        )
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            sizes: vec![20, 16, 12],
            dim: 300,
            injection_depth: 2,
            init_scale: 1.5,
            ..ModelConfig::default()
        }
    }

    fn phases() -> PhaseConfig {
        PhaseConfig {
            epochs_step1: 3,
            epochs_step2: 2,
            epochs_step3: 2,
            batch_size: 8,
            seed: 9,
            hd: HdTrainConfig {
                boost_correct_on_error: true,
                ..HdTrainConfig::default()
            },
            ..PhaseConfig::default()
        }
    }

    fn fresh(train: &SpikeDataset) -> SpikeHdModel {
        SpikeHdModel::new(&small_config(), train.channels(), &train.labels, 5).unwrap()
    }

    fn through_step2(train: &SpikeDataset) -> SpikeHdModel {
        let mut m = fresh(train);
        m.step1_train_snn(train, None, &phases()).unwrap();
        m.step2_train_hdc(train, None, &phases()).unwrap();
        m
    }

    #[test]
    fn out_of_order_phases_fail() {
        let (train, test) = task();
        let mut m = fresh(&train);
        assert!(matches!(m.step2_train_hdc(&train, None, &phases()), Err(Error::Phase { .. })));
        assert!(matches!(m.step3_cotrain(&train, None, &phases()), Err(Error::Phase { .. })));
        assert!(matches!(m.predict_end_to_end(&test.samples[0].0), Err(Error::Phase { .. })));
        assert!(m.online_update(Vec::new(), &HdTrainConfig::default()).is_err());
        assert!(m.evaluate(&test).is_err());
        m.step1_train_snn(&train, None, &phases()).unwrap();
        assert!(matches!(m.step1_train_snn(&train, None, &phases()), Err(Error::Phase { .. })));
        assert!(matches!(m.step3_cotrain(&train, None, &phases()), Err(Error::Phase { .. })));
    }

    #[test]
    fn zero_epoch_step1_warns_and_advances() {
        let (train, _) = task();
        let mut m = fresh(&train);
        let before = m.network().to_bytes();
        let cfg = PhaseConfig {
            epochs_step1: 0,
            ..phases()
        };
        let log = m.step1_train_snn(&train, None, &cfg).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(log.warnings.len(), 1);
        assert_eq!(m.phase(), Phase::Step1Done);
        assert_eq!(m.network().to_bytes(), before);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let (train, test) = task();
        let run = || {
            let mut m = fresh(&train);
            let a = m.step1_train_snn(&train, Some(&test), &phases()).unwrap();
            let b = m.step2_train_hdc(&train, Some(&test), &phases()).unwrap();
            let c = m.step3_cotrain(&train, Some(&test), &phases()).unwrap();
            (a, b, c, m.to_bytes().unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step1_train_accuracy_rises_early() {
        let blobs = synth_blobs(3, 32, 100, 0.1, 3).unwrap();
        let rc = RateCodeConfig {
            steps: 30,
            max_rate: 0.6,
            seed: 1,
        };
        let train = SpikeDataset::from_dense(&blobs, &rc).unwrap();
        let config = ModelConfig {
            init_scale: 1.0,
            ..small_config()
        };
        let mut m = SpikeHdModel::new(&config, train.channels(), &train.labels, 5).unwrap();
        let cfg = PhaseConfig {
            snn_lr: 0.03,
            batch_size: 32,
            ..phases()
        };
        let log = m.step1_train_snn(&train, None, &cfg).unwrap();
        let acc: Vec<f64> = log.epochs.iter().map(|e| e.train_accuracy).collect();
        assert!(acc.windows(2).all(|w| w[1] >= w[0]), "{acc:?}");
    }

    #[test]
    fn step2_and_online_leave_snn_frozen() {
        let (train, test) = task();
        let mut m = fresh(&train);
        m.step1_train_snn(&train, None, &phases()).unwrap();
        let snn = m.network().to_bytes();
        let readouts: Vec<_> = m.network().layers().iter().map(|l| l.readout().clone()).collect();
        m.step2_train_hdc(&train, None, &phases()).unwrap();
        assert_eq!(m.network().to_bytes(), snn);
        m.online_update(test.samples.iter().cloned(), &phases().hd).unwrap();
        assert_eq!(m.network().to_bytes(), snn);
        m.step3_cotrain(&train, None, &phases()).unwrap();
        assert_ne!(m.network().to_bytes(), snn);
        let after: Vec<_> = m.network().layers().iter().map(|l| l.readout().clone()).collect();
        assert_eq!(after, readouts);
    }

    #[test]
    fn one_sample_step2_is_one_update() {
        let (train, _) = task();
        let one = train.subset(0..1);
        let mut m = fresh(&train);
        m.step1_train_snn(&train, None, &phases()).unwrap();
        let mut reference = m.memory().clone();
        let cfg = PhaseConfig {
            epochs_step2: 1,
            ..phases()
        };
        m.step2_train_hdc(&one, None, &cfg).unwrap();
        let (spikes, label) = &one.samples[0];
        let h = m.basis().encode(&m.features(spikes).unwrap()).unwrap();
        reference.update_single(&h, *label, &cfg.hd).unwrap();
        assert_eq!(m.memory(), &reference);
    }

    #[test]
    fn never_updating_memory_still_trains_snn() {
        let (train, _) = task();
        let mut m = through_step2(&train);
        let (memory, snn) = (m.memory().clone(), m.network().to_bytes());
        let cfg = PhaseConfig {
            hd_update_period: UpdatePeriod::NEVER,
            ..phases()
        };
        m.step3_cotrain(&train, None, &cfg).unwrap();
        assert_eq!(m.memory(), &memory);
        assert_ne!(m.network().to_bytes(), snn);
    }

    #[test]
    fn zero_cotrain_rate_matches_step2_training() {
        let (train, test) = task();
        let cfg = PhaseConfig {
            cotrain_snn_lr: 0.0,
            hd_update_period: UpdatePeriod::Every(1),
            ..phases()
        };
        let mut a = through_step2(&train);
        let mut b = a.clone();
        let log3 = a.step3_cotrain(&train, Some(&test), &cfg).unwrap();
        // continue Step II on the same stream from the same state
        b.phase = Phase::Step1Done;
        let log2 = b.step2_train_hdc(&train, Some(&test), &cfg).unwrap();
        assert_eq!(a.memory(), b.memory());
        assert_eq!(a.network(), b.network());
        let strip = |l: &AccuracyLog| -> Vec<(f64, Option<f64>)> {
            l.epochs.iter().map(|e| (e.train_accuracy, e.test_accuracy)).collect()
        };
        assert_eq!(strip(&log3), strip(&log2));
    }

    /// Straight-line forward pass, written without the library's matrices.
    fn oracle_predict(m: &SpikeHdModel, spikes: &SpikeTrain) -> Label {
        let lp = m.config().lif;
        let steps = spikes.steps();
        let mut input: Vec<Vec<f64>> = (0..steps)
            .map(|t| spikes.row(t).iter().map(|&s| s as u8 as f64).collect())
            .collect();
        for l in 0..m.injection_depth() {
            let w = m.network().layer(l).weights();
            let (rows, cols) = w.shape();
            let (mut q, mut p, mut r) = (vec![0.0; cols], vec![0.0; cols], vec![0.0; rows]);
            let mut out = Vec::with_capacity(steps);
            for x in &input {
                for j in 0..cols {
                    q[j] = lp.alpha_syn * q[j] + x[j];
                    p[j] = lp.alpha_mem * p[j] + q[j];
                }
                let mut s = vec![0.0; rows];
                for i in 0..rows {
                    let u: f64 = (0..cols).map(|j| w[(i, j)] * p[j]).sum::<f64>() - r[i];
                    s[i] = if u > lp.theta { 1.0 } else { 0.0 };
                    r[i] = lp.gamma_ref * r[i] + lp.theta * s[i];
                }
                out.push(s);
            }
            input = out;
        }
        let n = input[0].len();
        let f: Vec<f64> = (0..n)
            .map(|i| input.iter().map(|s| s[i]).sum::<f64>() / steps as f64)
            .collect();
        let basis = m.basis();
        let h: Vec<f64> = (0..basis.dim())
            .map(|d| {
                let z: f64 = (0..n).map(|j| basis.base()[(d, j)] * f[j]).sum();
                (z + basis.phases()[d]).tanh()
            })
            .collect();
        let mem = m.memory();
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..mem.class_count() {
            let row = mem.row(c);
            let rn = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let sim = if rn == 0.0 || hn == 0.0 {
                0.0
            } else {
                row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() / (rn * hn)
            };
            if sim > best.1 {
                best = (c, sim);
            }
        }
        mem.labels()[best.0]
    }

    #[test]
    fn prediction_matches_straight_line_oracle() {
        let (train, test) = task();
        let m = through_step2(&train);
        assert!(m.features(&test.samples[0].0).unwrap().iter().any(|v| *v > 0.0));
        let mut hits = 0;
        for (spikes, label) in test.samples.iter().take(15) {
            let p = m.predict_end_to_end(spikes).unwrap();
            assert_eq!(p, oracle_predict(&m, spikes));
            assert_eq!(p, m.predict_end_to_end(spikes).unwrap());
            hits += (p == *label) as usize;
        }
        let acc = m.evaluate(&test.subset(0..15)).unwrap();
        assert_eq!(acc, hits as f64 / 15.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (train, test) = task();
        let m = through_step2(&train);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.shdk");
        m.save(&path).unwrap();
        let back = SpikeHdModel::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.evaluate(&test).unwrap(), m.evaluate(&test).unwrap());
        let bytes = m.to_bytes().unwrap();
        assert!(SpikeHdModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rebind_equals_fresh_build() {
        let (train, _) = task();
        let mut m = fresh(&train);
        m.step1_train_snn(&train, None, &phases()).unwrap();
        let config = ModelConfig {
            dim: 500,
            injection_depth: 3,
            ..small_config()
        };
        let mut direct = SpikeHdModel::new(&config, train.channels(), &train.labels, 5).unwrap();
        direct.step1_train_snn(&train, None, &phases()).unwrap();
        assert_eq!(m.rebind(3, 500).unwrap(), direct);
    }

    #[test]
    fn final_layer_injection_is_flagged() {
        let (train, _) = task();
        let config = ModelConfig {
            injection_depth: 3,
            ..small_config()
        };
        let mut m = SpikeHdModel::new(&config, train.channels(), &train.labels, 5).unwrap();
        assert!(m.injects_at_final_layer());
        m.step1_train_snn(&train, None, &phases()).unwrap();
        let log = m.step2_train_hdc(&train, None, &phases()).unwrap();
        assert_eq!(log.warnings.len(), 1);
    }

    #[test]
    fn update_period_parses_never() {
        #[derive(Deserialize)]
        struct W {
            p: UpdatePeriod,
        }
        let w: W = toml::from_str("p = \"never\"").unwrap();
        assert_eq!(w.p, UpdatePeriod::NEVER);
        let w: W = toml::from_str("p = 3").unwrap();
        assert_eq!(w.p, UpdatePeriod::Every(3));
        assert!(UpdatePeriod::Every(3).fires(2) && !UpdatePeriod::Every(3).fires(3));
    }
}
