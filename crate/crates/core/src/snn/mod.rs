//! Discrete-time leaky integrate-and-fire network with fixed random
//! per-layer readouts.
//!
//! Each layer keeps two input traces and two neuron traces. Per step:
//!
//! ```text
//! Q ← α_syn·Q + x
//! P ← α_mem·P + Q
//! U = W·P − R
//! S = [U > θ]
//! R ← γ_ref·R + θ·S
//! y = G·S
//! ```
//!
//! `P` depends only on the input, so a whole sample can be integrated with
//! one matrix product `W·[P_1 … P_T]` before the reset recurrence runs.

mod learning;

pub use learning::{
    inject_feature_gradient, injected_gradients, layer_local_gradient, local_update,
    surrogate_derivative, weight_gradient,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{check_len, Error, Result};
use crate::spikes::SpikeTrain;

const NETWORK_MAGIC: &[u8; 4] = b"SHDN";
const NETWORK_VERSION: u32 = 1;

/// Default hidden sizes of the five-layer network.
pub const DEFAULT_SIZES: [usize; 5] = [150, 120, 100, 120, 150];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    pub alpha_mem: f64,
    pub alpha_syn: f64,
    pub gamma_ref: f64,
    pub theta: f64,
    pub surrogate_slope: f64,
    pub dropout_p: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            alpha_mem: 0.9,
            alpha_syn: 0.85,
            gamma_ref: 0.9,
            theta: 1.0,
            surrogate_slope: 10.0,
            dropout_p: 0.2,
        }
    }
}

impl LifParams {
    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        for (name, v) in [
            ("alpha_mem", self.alpha_mem),
            ("alpha_syn", self.alpha_syn),
            ("gamma_ref", self.gamma_ref),
        ] {
            if !(v > 0.0 && v < 1.0) {
                errors.push(format!("{path}.{name}: must lie in (0, 1), got {v}"));
            }
        }
        if !self.theta.is_finite() {
            errors.push(format!("{path}.theta: must be finite"));
        }
        if !(self.surrogate_slope.is_finite() && self.surrogate_slope > 0.0) {
            errors.push(format!("{path}.surrogate_slope: must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            errors.push(format!("{path}.dropout_p: must lie in [0, 1)"));
        }
    }

    fn check(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.validate("lif", &mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(errors.join("; ")))
        }
    }
}

/// How a layer's `T`-step record collapses into a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Spike count divided by `T`.
    #[default]
    MeanRate,
    /// Time-averaged pre-spike membrane potential `U`.
    MeanReadoutPotential,
}

/// One LIF layer: `m × p` trainable weights and a frozen `c × m` readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayer {
    weights: DMatrix<f64>,
    readout: DMatrix<f64>,
    params: LifParams,
}

/// Dynamic traces of one layer. `q`, `p` have the input width; `r`, `u`
/// the neuron count.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub r: DVector<f64>,
    pub u: DVector<f64>,
}

impl LayerState {
    pub fn zeros(inputs: usize, neurons: usize) -> Self {
        Self {
            q: DVector::zeros(inputs),
            p: DVector::zeros(inputs),
            r: DVector::zeros(neurons),
            u: DVector::zeros(neurons),
        }
    }

    pub fn reset(&mut self) {
        self.q.fill(0.0);
        self.p.fill(0.0);
        self.r.fill(0.0);
        self.u.fill(0.0);
    }

    pub fn is_zero(&self) -> bool {
        [&self.q, &self.p, &self.r, &self.u]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0))
    }
}

impl LifLayer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn neurons(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    pub fn readout(&self) -> &DMatrix<f64> {
        &self.readout
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    pub fn fresh_state(&self) -> LayerState {
        LayerState::zeros(self.inputs(), self.neurons())
    }

    /// Advances one time step.
    pub fn step(&self, state: &mut LayerState, input: &[bool]) -> Result<(Vec<bool>, Vec<f64>)> {
        check_len(self.inputs(), input.len(), "layer input spikes")?;
        check_len(self.inputs(), state.p.len(), "layer input traces")?;
        check_len(self.neurons(), state.r.len(), "layer neuron traces")?;
        let lp = &self.params;
        for (j, &x) in input.iter().enumerate() {
            state.q[j] = lp.alpha_syn * state.q[j] + if x { 1.0 } else { 0.0 };
            state.p[j] = lp.alpha_mem * state.p[j] + state.q[j];
        }
        let drive = &self.weights * &state.p;
        let mut spikes = DVector::zeros(self.neurons());
        for i in 0..self.neurons() {
            let u = drive[i] - state.r[i];
            state.u[i] = u;
            let s = if u > lp.theta { 1.0 } else { 0.0 };
            spikes[i] = s;
            state.r[i] = lp.gamma_ref * state.r[i] + lp.theta * s;
        }
        let readout = &self.readout * &spikes;
        Ok((
            spikes.iter().map(|s| *s > 0.0).collect(),
            readout.as_slice().to_vec(),
        ))
    }

    /// Runs the whole input (`p × T`, one column per step) through the layer.
    fn run(&self, state: &mut LayerState, input: &DMatrix<f64>, mask: Option<Vec<f64>>) -> LayerRecord {
        let lp = &self.params;
        let steps = input.ncols();
        let mut traces = DMatrix::zeros(self.inputs(), steps);
        for t in 0..steps {
            for j in 0..self.inputs() {
                state.q[j] = lp.alpha_syn * state.q[j] + input[(j, t)];
                state.p[j] = lp.alpha_mem * state.p[j] + state.q[j];
                traces[(j, t)] = state.p[j];
            }
        }
        let mut membrane = &self.weights * &traces;
        let mut spikes = DMatrix::zeros(self.neurons(), steps);
        for t in 0..steps {
            for i in 0..self.neurons() {
                let u = membrane[(i, t)] - state.r[i];
                membrane[(i, t)] = u;
                let s = if u > lp.theta { 1.0 } else { 0.0 };
                spikes[(i, t)] = s;
                state.r[i] = lp.gamma_ref * state.r[i] + lp.theta * s;
            }
        }
        if steps > 0 {
            state.u.copy_from(&membrane.column(steps - 1));
        }
        let readout = match &mask {
            Some(m) => {
                let mut masked = spikes.clone();
                for (i, w) in m.iter().enumerate() {
                    masked.row_mut(i).scale_mut(*w);
                }
                &self.readout * masked
            }
            None => &self.readout * &spikes,
        };
        LayerRecord {
            traces,
            membrane,
            spikes,
            readout,
            dropout: mask,
        }
    }
}

/// Everything one layer produced while processing a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    /// Filtered input trace `P`, `p × T`.
    pub traces: DMatrix<f64>,
    /// Pre-spike membrane potential `U`, `m × T`.
    pub membrane: DMatrix<f64>,
    /// Output spikes `S` (0/1), `m × T`.
    pub spikes: DMatrix<f64>,
    /// Readout values, `c × T`.
    pub readout: DMatrix<f64>,
    /// Per-neuron readout dropout multipliers used in training mode.
    pub dropout: Option<Vec<f64>>,
}

impl LayerRecord {
    pub fn steps(&self) -> usize {
        self.spikes.ncols()
    }

    /// Time-averaged readout.
    pub fn mean_readout(&self) -> Vec<f64> {
        let t = self.steps().max(1) as f64;
        self.readout.column_sum().iter().map(|v| v / t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Records {
    pub layers: Vec<LayerRecord>,
}

impl Records {
    pub fn steps(&self) -> usize {
        self.layers.first().map_or(0, LayerRecord::steps)
    }

    /// Pooled activity of layer `depth` (1-based).
    pub fn layer_activity(&self, depth: usize, pooling: Pooling) -> Result<Vec<f64>> {
        layer_activity(self, depth, pooling)
    }
}

/// Collapses the record of layer `depth` (1-based) over time.
pub fn layer_activity(records: &Records, depth: usize, pooling: Pooling) -> Result<Vec<f64>> {
    if depth == 0 || depth > records.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} outside 1..={}",
            records.layers.len()
        )));
    }
    let rec = &records.layers[depth - 1];
    let steps = rec.steps();
    if steps == 0 {
        return Err(Error::InvalidArgument("cannot pool an empty record".into()));
    }
    let src = match pooling {
        Pooling::MeanRate => &rec.spikes,
        Pooling::MeanReadoutPotential => &rec.membrane,
    };
    let t = steps as f64;
    Ok(src.column_sum().iter().map(|v| v / t).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// No dropout.
    Eval,
    /// Readout dropout with masks drawn from `seed`, fixed for the sample.
    Train { seed: u64 },
}

/// Dynamic state for every layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
}

impl NetworkState {
    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.reset();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(LayerState::is_zero)
    }
}

/// Ordered stack of LIF layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LifNetwork {
    input_dim: usize,
    classes: usize,
    params: LifParams,
    weight_seed: u64,
    readout_seed: u64,
    init_scale: f64,
    layers: Vec<LifLayer>,
    state: NetworkState,
}

impl LifNetwork {
    /// Weights are i.i.d. uniform on `±init_scale/√fan_in` from `weight_seed`;
    /// readouts are i.i.d. normal scaled by `1/√m` from `readout_seed`.
    pub fn new(
        input_dim: usize,
        sizes: &[usize],
        classes: usize,
        params: LifParams,
        weight_seed: u64,
        readout_seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        params.check()?;
        if input_dim == 0 || classes == 0 || sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "network needs positive input width, class count and layer sizes".into(),
            ));
        }
        if !(init_scale.is_finite() && init_scale > 0.0) {
            return Err(Error::InvalidArgument("init_scale must be positive".into()));
        }
        let mut wrng = ChaCha8Rng::seed_from_u64(weight_seed);
        let mut rrng = ChaCha8Rng::seed_from_u64(readout_seed);
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input_dim;
        for &m in sizes {
            let bound = init_scale / (fan_in as f64).sqrt();
            let weights =
                DMatrix::from_fn(m, fan_in, |_, _| (wrng.random::<f64>() * 2.0 - 1.0) * bound);
            let gscale = 1.0 / (m as f64).sqrt();
            let readout = DMatrix::from_fn(classes, m, |_, _| {
                let z: f64 = rrng.sample(StandardNormal);
                z * gscale
            });
            layers.push(LifLayer {
                weights,
                readout,
                params,
            });
            fan_in = m;
        }
        let state = NetworkState {
            layers: layers.iter().map(LifLayer::fresh_state).collect(),
        };
        Ok(Self {
            input_dim,
            classes,
            params,
            weight_seed,
            readout_seed,
            init_scale,
            layers,
            state,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(LifLayer::neurons).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LifLayer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &LifLayer {
        &self.layers[index]
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut LifLayer {
        &mut self.layers[index]
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn fresh_state(&self) -> NetworkState {
        NetworkState {
            layers: self.layers.iter().map(LifLayer::fresh_state).collect(),
        }
    }

    /// Number of trainable weights (readouts excluded).
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    /// Zeroes every trace of the internal state; weights are untouched.
    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Simulates the whole network on `train` using the internal state.
    pub fn simulate(&mut self, train: &SpikeTrain, mode: SimMode) -> Result<Records> {
        let mut state = std::mem::replace(&mut self.state, NetworkState { layers: Vec::new() });
        let out = self.simulate_with(&mut state, train, mode, self.depth());
        self.state = state;
        out
    }

    /// Simulates layers `1..=upto` with externally held state.
    pub fn simulate_with(
        &self,
        state: &mut NetworkState,
        train: &SpikeTrain,
        mode: SimMode,
        upto: usize,
    ) -> Result<Records> {
        check_len(self.input_dim, train.channels(), "spike train channels")?;
        check_len(self.depth(), state.layers.len(), "network state layers")?;
        if upto == 0 || upto > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "simulation depth {upto} outside 1..={}",
                self.depth()
            )));
        }
        let mut rng = match mode {
            SimMode::Train { seed } if self.params.dropout_p > 0.0 => {
                Some(ChaCha8Rng::seed_from_u64(seed))
            }
            _ => None,
        };
        let mut input = train.to_matrix();
        let mut layers = Vec::with_capacity(upto);
        for (layer, lstate) in self.layers.iter().zip(state.layers.iter_mut()).take(upto) {
            let mask = rng.as_mut().map(|r| {
                let keep = 1.0 / (1.0 - self.params.dropout_p);
                (0..layer.neurons())
                    .map(|_| {
                        if r.random::<f64>() < self.params.dropout_p {
                            0.0
                        } else {
                            keep
                        }
                    })
                    .collect()
            });
            let rec = layer.run(lstate, &input, mask);
            input = rec.spikes.clone();
            layers.push(rec);
        }
        Ok(Records { layers })
    }

    /// Layout: `"SHDN"`, `u32` version, `u64` input width, `u64` classes,
    /// `u64` layer count, `u64` size per layer, `u64` weight seed, `u64`
    /// readout seed, `f64` init scale, six `f64` LIF parameters
    /// (`alpha_mem, alpha_syn, gamma_ref, theta, surrogate_slope, dropout_p`),
    /// then every layer's `m × p` weights row-major. Readouts are regenerated
    /// from the readout seed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(NETWORK_MAGIC, NETWORK_VERSION);
        enc.u64(self.input_dim as u64)
            .u64(self.classes as u64)
            .u64(self.layers.len() as u64);
        for l in &self.layers {
            enc.u64(l.neurons() as u64);
        }
        let p = &self.params;
        enc.u64(self.weight_seed)
            .u64(self.readout_seed)
            .f64(self.init_scale)
            .f64(p.alpha_mem)
            .f64(p.alpha_syn)
            .f64(p.gamma_ref)
            .f64(p.theta)
            .f64(p.surrogate_slope)
            .f64(p.dropout_p);
        for l in &self.layers {
            enc.f64s(l.weights.transpose().as_slice());
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, NETWORK_MAGIC, NETWORK_VERSION)?;
        let input_dim = dec.usize()?;
        let classes = dec.usize()?;
        let count = dec.usize()?;
        if count > 64 {
            return Err(Error::Format(format!("implausible layer count {count}")));
        }
        let sizes = (0..count).map(|_| dec.usize()).collect::<Result<Vec<_>>>()?;
        let weight_seed = dec.u64()?;
        let readout_seed = dec.u64()?;
        let init_scale = dec.f64()?;
        let params = LifParams {
            alpha_mem: dec.f64()?,
            alpha_syn: dec.f64()?,
            gamma_ref: dec.f64()?,
            theta: dec.f64()?,
            surrogate_slope: dec.f64()?,
            dropout_p: dec.f64()?,
        };
        let mut net = Self::new(
            input_dim,
            &sizes,
            classes,
            params,
            weight_seed,
            readout_seed,
            init_scale,
        )?;
        for layer in &mut net.layers {
            let (m, p) = layer.weights.shape();
            let vals = dec.f64s(m * p)?;
            layer.weights = DMatrix::from_row_slice(m, p, &vals);
        }
        dec.finish()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_train(steps: usize, channels: usize, rate: f64, seed: u64) -> SpikeTrain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = SpikeTrain::silent(steps, channels);
        for s in 0..steps {
            for c in 0..channels {
                if rng.random::<f64>() < rate {
                    t.set(s, c, true);
                }
            }
        }
        t
    }

    fn small_net(sizes: &[usize]) -> LifNetwork {
        LifNetwork::new(12, sizes, 3, LifParams::default(), 1, 2, 1.0).unwrap()
    }

    #[test]
    fn reset_zeroes_traces_only() {
        let mut net = small_net(&[8, 6]);
        net.simulate(&random_train(30, 12, 0.3, 0), SimMode::Eval).unwrap();
        assert!(!net.state().is_zero());
        let weights = net.to_bytes();
        net.reset();
        assert!(net.state().is_zero());
        net.reset();
        assert!(net.state().is_zero());
        assert_eq!(net.to_bytes(), weights);
    }

    #[test]
    fn zero_input_is_silent() {
        let mut net = small_net(&[8, 6, 4]);
        let recs = net.simulate(&SpikeTrain::silent(200, 12), SimMode::Eval).unwrap();
        for r in &recs.layers {
            assert_eq!(r.spikes.sum(), 0.0);
            assert!(r.membrane.iter().all(|u| *u == 0.0));
        }
    }

    /// Scalar hand simulation of one neuron with one always-on input.
    #[test]
    fn single_neuron_matches_scalar_recurrence() {
        let params = LifParams::default();
        let mut net = LifNetwork::new(1, &[1], 1, params, 0, 0, 1.0).unwrap();
        let w = 0.5;
        net.layer_mut(0).weights_mut()[(0, 0)] = w;
        let steps = 60;
        let mut train = SpikeTrain::silent(steps, 1);
        for t in 0..steps {
            train.set(t, 0, true);
        }
        let recs = net.simulate(&train, SimMode::Eval).unwrap();

        let (mut q, mut p, mut r) = (0.0f64, 0.0f64, 0.0f64);
        let mut count = 0;
        let mut first = None;
        for t in 0..steps {
            q = params.alpha_syn * q + 1.0;
            p = params.alpha_mem * p + q;
            let u = w * p - r;
            let s = u > params.theta;
            if s {
                count += 1;
                first.get_or_insert(t);
            }
            r = params.gamma_ref * r + if s { params.theta } else { 0.0 };
            assert_eq!(recs.layers[0].spikes[(0, t)] == 1.0, s);
        }
        assert!(first.is_some());
        assert_eq!(recs.layers[0].spikes.sum() as usize, count);
    }

    /// After a spike the membrane sits below the run where that spike was
    /// suppressed (refractory term).
    #[test]
    fn refractory_reduces_membrane_after_spike() {
        let params = LifParams::default();
        let w = 0.5;
        let run = |suppress_at: Option<usize>| {
            let (mut q, mut p, mut r) = (0.0f64, 0.0f64, 0.0f64);
            let mut us = Vec::new();
            for t in 0..20 {
                q = params.alpha_syn * q + 1.0;
                p = params.alpha_mem * p + q;
                let u = w * p - r;
                us.push(u);
                let s = u > params.theta && Some(t) != suppress_at;
                r = params.gamma_ref * r + if s { params.theta } else { 0.0 };
            }
            us
        };
        let mut net = LifNetwork::new(1, &[1], 1, params, 0, 0, 1.0).unwrap();
        net.layer_mut(0).weights_mut()[(0, 0)] = w;
        let mut train = SpikeTrain::silent(20, 1);
        for t in 0..20 {
            train.set(t, 0, true);
        }
        let recs = net.simulate(&train, SimMode::Eval).unwrap();
        let first = (0..20).find(|&t| recs.layers[0].spikes[(0, t)] == 1.0).unwrap();
        let counter = run(Some(first));
        let actual = recs.layers[0].membrane[(0, first + 1)];
        assert!(actual < counter[first + 1]);
        assert!((counter[first + 1] - actual - params.theta).abs() < 1e-12);
    }

    #[test]
    fn simulate_equals_folded_steps() {
        let net = small_net(&[9]);
        let train = random_train(50, 12, 0.4, 3);
        let mut state = net.fresh_state();
        let recs = net.simulate_with(&mut state, &train, SimMode::Eval, 1).unwrap();
        let layer = net.layer(0);
        let mut lstate = layer.fresh_state();
        for t in 0..50 {
            let (spikes, readout) = layer.step(&mut lstate, &train.row(t)).unwrap();
            for i in 0..9 {
                assert_eq!(spikes[i], recs.layers[0].spikes[(i, t)] == 1.0);
            }
            for c in 0..3 {
                assert!((readout[c] - recs.layers[0].readout[(c, t)]).abs() < 1e-12);
            }
        }
        assert!((lstate.u.clone() - state.layers[0].u.clone()).abs().max() < 1e-12);
    }

    #[test]
    fn split_train_gives_same_spike_counts() {
        let net = small_net(&[10, 7]);
        let train = random_train(80, 12, 0.35, 4);
        let mut whole_state = net.fresh_state();
        let whole = net.simulate_with(&mut whole_state, &train, SimMode::Eval, 2).unwrap();
        let mut state = net.fresh_state();
        let a = net.simulate_with(&mut state, &train.slice(0, 40), SimMode::Eval, 2).unwrap();
        let b = net.simulate_with(&mut state, &train.slice(40, 80), SimMode::Eval, 2).unwrap();
        for l in 0..2 {
            let total = a.layers[l].spikes.column_sum() + b.layers[l].spikes.column_sum();
            assert_eq!(total, whole.layers[l].spikes.column_sum());
        }
    }

    #[test]
    fn empty_train_leaves_state() {
        let mut net = small_net(&[5]);
        net.simulate(&random_train(10, 12, 0.5, 1), SimMode::Eval).unwrap();
        let before = net.state().clone();
        let recs = net.simulate(&SpikeTrain::silent(0, 12), SimMode::Eval).unwrap();
        assert_eq!(recs.steps(), 0);
        assert_eq!(net.state(), &before);
        assert!(layer_activity(&recs, 1, Pooling::MeanRate).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut net = small_net(&[5]);
        assert!(matches!(
            net.simulate(&SpikeTrain::silent(3, 11), SimMode::Eval),
            Err(Error::Shape { .. })
        ));
        let mut st = net.layer(0).fresh_state();
        assert!(net.layer(0).step(&mut st, &[true; 3]).is_err());
    }

    #[test]
    fn activity_pooling() {
        let mut net = small_net(&[6, 4]);
        let train = random_train(40, 12, 0.5, 9);
        let recs = net.simulate(&train, SimMode::Eval).unwrap();
        let rate = layer_activity(&recs, 1, Pooling::MeanRate).unwrap();
        for i in 0..6 {
            let mut c = 0.0;
            for t in 0..40 {
                c += recs.layers[0].spikes[(i, t)];
            }
            assert_eq!(rate[i], c / 40.0);
            assert!((0.0..=1.0).contains(&rate[i]));
        }
        let pot = layer_activity(&recs, 2, Pooling::MeanReadoutPotential).unwrap();
        let mean0: f64 = (0..40).map(|t| recs.layers[1].membrane[(0, t)]).sum::<f64>() / 40.0;
        assert!((pot[0] - mean0).abs() < 1e-12);
        assert!(layer_activity(&recs, 0, Pooling::MeanRate).is_err());
        assert!(layer_activity(&recs, 3, Pooling::MeanRate).is_err());

        // every-step firing → rate 1
        let rec = LayerRecord {
            traces: DMatrix::zeros(1, 5),
            membrane: DMatrix::zeros(1, 5),
            spikes: DMatrix::from_element(1, 5, 1.0),
            readout: DMatrix::zeros(1, 5),
            dropout: None,
        };
        let r = Records { layers: vec![rec] };
        assert_eq!(layer_activity(&r, 1, Pooling::MeanRate).unwrap(), vec![1.0]);
    }

    #[test]
    fn dropout_masks_are_seeded() {
        let net = small_net(&[8]);
        let train = random_train(20, 12, 0.5, 2);
        let run = |seed| {
            let mut st = net.fresh_state();
            net.simulate_with(&mut st, &train, SimMode::Train { seed }, 1)
                .unwrap()
                .layers[0]
                .dropout
                .clone()
                .unwrap()
        };
        assert_eq!(run(5), run(5));
        let mut st = net.fresh_state();
        let eval = net.simulate_with(&mut st, &train, SimMode::Eval, 1).unwrap();
        assert!(eval.layers[0].dropout.is_none());
    }

    #[test]
    fn network_round_trip() {
        let mut net = small_net(&[7, 5]);
        net.layer_mut(1).weights_mut()[(2, 3)] = 0.123;
        let back = LifNetwork::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), net.to_bytes());
        for (a, b) in back.layers().iter().zip(net.layers()) {
            assert_eq!(a, b);
        }
    }
}
