//! Class hypervector memory: single-pass adaptive training and
//! similarity-based inference.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::encoder::{dot, Hypervector};
use crate::error::{check_len, Error, Result};

pub type Label = u32;

const MEMORY_MAGIC: &[u8; 4] = b"SHDM";
const MEMORY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdTrainConfig {
    /// Learning rate for the correct-class update.
    pub eta1: f64,
    /// Learning rate for the mispredicted-class update.
    pub eta2: f64,
    /// Also reinforce the true class on a misprediction.
    pub boost_correct_on_error: bool,
    /// Leave the memory untouched when the prediction is correct.
    pub skip_update_when_correct: bool,
    /// Binarize query hypervectors before similarity and update.
    pub binarize_queries: bool,
}

impl Default for HdTrainConfig {
    fn default() -> Self {
        Self {
            eta1: 1.0,
            eta2: 1.0,
            boost_correct_on_error: false,
            skip_update_when_correct: false,
            binarize_queries: false,
        }
    }
}

impl HdTrainConfig {
    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if !(self.eta1.is_finite() && self.eta1 > 0.0) {
            errors.push(format!("{path}.eta1: must be positive, got {}", self.eta1));
        }
        if !(self.eta2.is_finite() && self.eta2 > 0.0) {
            errors.push(format!("{path}.eta2: must be positive, got {}", self.eta2));
        }
    }
}

/// One applied row update `C_label += coefficient · H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDelta {
    pub label: Label,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub predicted: Label,
    pub correct: bool,
    pub deltas: Vec<RowDelta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub correct: Vec<bool>,
}

impl TrainStats {
    pub fn accuracy(&self) -> f64 {
        if self.correct.is_empty() {
            return 0.0;
        }
        self.correct.iter().filter(|c| **c).count() as f64 / self.correct.len() as f64
    }
}

/// `k` real-valued class hypervectors, one per label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMemory {
    labels: Vec<Label>,
    dim: usize,
    rows: Vec<f64>,
}

impl ClassMemory {
    /// All-zero memory for the given labels.
    pub fn new(labels: &[Label], dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("label list is empty".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("memory dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for &l in labels {
            if !seen.insert(l) {
                return Err(Error::DuplicateLabel(l));
            }
        }
        Ok(Self {
            labels: labels.to_vec(),
            dim,
            rows: vec![0.0; labels.len() * dim],
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.rows[index * self.dim..(index + 1) * self.dim]
    }

    pub fn row_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.rows[index * self.dim..(index + 1) * self.dim]
    }

    /// Row-major `k × D` values.
    pub fn values(&self) -> &[f64] {
        &self.rows
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn index_of(&self, label: Label) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .ok_or(Error::UnknownLabel(label))
    }

    /// Cosine similarity of `h` against every class row. Zero-norm rows (and
    /// a zero-norm query) score `0`.
    pub fn similarities(&self, h: &Hypervector) -> Result<Vec<f64>> {
        check_len(self.dim, h.len(), "query hypervector")?;
        let q = h.values();
        let qn = dot(q, q).sqrt();
        Ok((0..self.class_count())
            .map(|i| {
                let row = self.row(i);
                let rn = dot(row, row).sqrt();
                if rn == 0.0 || qn == 0.0 {
                    0.0
                } else {
                    (dot(q, row) / (qn * rn)).clamp(-1.0, 1.0)
                }
            })
            .collect())
    }

    /// Index of the most similar class; ties go to the lowest index.
    pub fn predict_index(&self, h: &Hypervector) -> Result<usize> {
        Ok(argmax(&self.similarities(h)?))
    }

    pub fn predict(&self, h: &Hypervector) -> Result<Label> {
        Ok(self.labels[self.predict_index(h)?])
    }

    fn add_row(&mut self, index: usize, coefficient: f64, h: &[f64]) {
        if coefficient == 0.0 {
            return;
        }
        for (c, v) in self.row_mut(index).iter_mut().zip(h) {
            *c += coefficient * v;
        }
    }

    /// One adaptive update.
    ///
    /// Correct prediction: `C_l += η₁(1−δ_l)·H`.
    /// Misprediction as `l'`: `C_l' −= η₂(δ_l' − δ_l)·H`, plus
    /// `C_l += η₂(δ_l' − δ_l)·H` when `boost_correct_on_error` is set.
    /// A class whose row is still all-zero additionally receives
    /// `η₁(1−δ_l)·H` so that unseen classes can enter the memory.
    pub fn update_single(
        &mut self,
        h: &Hypervector,
        label: Label,
        cfg: &HdTrainConfig,
    ) -> Result<UpdateOutcome> {
        let truth = self.index_of(label)?;
        let query = if cfg.binarize_queries {
            h.binarize()
        } else {
            h.clone()
        };
        let sims = self.similarities(&query)?;
        let predicted = argmax(&sims);
        let delta_l = sims[truth];
        let cold = self.row(truth).iter().all(|v| *v == 0.0);
        let mut deltas = Vec::with_capacity(2);

        if predicted == truth {
            if !cfg.skip_update_when_correct || cold {
                deltas.push(RowDelta {
                    label,
                    coefficient: cfg.eta1 * (1.0 - delta_l),
                });
            }
        } else {
            let margin = sims[predicted] - delta_l;
            deltas.push(RowDelta {
                label: self.labels[predicted],
                coefficient: -cfg.eta2 * margin,
            });
            if cfg.boost_correct_on_error {
                deltas.push(RowDelta {
                    label,
                    coefficient: cfg.eta2 * margin,
                });
            }
            if cold {
                deltas.push(RowDelta {
                    label,
                    coefficient: cfg.eta1 * (1.0 - delta_l),
                });
            }
        }

        for d in &deltas {
            let idx = self.index_of(d.label)?;
            self.add_row(idx, d.coefficient, query.values());
        }
        Ok(UpdateOutcome {
            predicted: self.labels[predicted],
            correct: predicted == truth,
            deltas,
        })
    }

    /// Folds [`ClassMemory::update_single`] over the stream, consuming each
    /// sample exactly once in order.
    pub fn train_single_pass<'a, I>(&mut self, stream: I, cfg: &HdTrainConfig) -> Result<TrainStats>
    where
        I: IntoIterator<Item = (&'a Hypervector, Label)>,
    {
        let mut correct = Vec::new();
        for (h, label) in stream {
            correct.push(self.update_single(h, label, cfg)?.correct);
        }
        Ok(TrainStats { correct })
    }

    /// Cross-entropy of the softmax over cosine scores against the one-hot
    /// target, and its gradient with respect to the query.
    ///
    /// With `p = softmax(δ)`, `∂L/∂h = Σ_i (p_i − y_i)·(C_i/(‖h‖‖C_i‖) − δ_i·h/‖h‖²)`.
    /// Zero-norm rows contribute a constant score of zero and no gradient.
    pub fn loss_and_gradient(&self, h: &Hypervector, label: Label) -> Result<(f64, Vec<f64>)> {
        let truth = self.index_of(label)?;
        check_len(self.dim, h.len(), "query hypervector")?;
        let q = h.values();
        let qn2 = dot(q, q);
        if qn2 == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let qn = qn2.sqrt();
        let sims = self.similarities(h)?;
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = sims.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = -(exps[truth] / z).ln();

        let mut grad = vec![0.0; self.dim];
        for (i, e) in exps.iter().enumerate() {
            let coeff = e / z - if i == truth { 1.0 } else { 0.0 };
            let row = self.row(i);
            let rn = dot(row, row).sqrt();
            if rn == 0.0 || coeff == 0.0 {
                continue;
            }
            let a = coeff / (qn * rn);
            let b = coeff * sims[i] / qn2;
            for ((g, c), x) in grad.iter_mut().zip(row).zip(q) {
                *g += a * c - b * x;
            }
        }
        Ok((loss, grad))
    }

    /// Layout: `"SHDM"`, `u32` version, `u64 k`, `u64 D`, `k × u32` labels,
    /// then `k·D` row-major `f64` values, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(MEMORY_MAGIC, MEMORY_VERSION);
        enc.u64(self.labels.len() as u64).u64(self.dim as u64);
        for &l in &self.labels {
            enc.u32(l);
        }
        enc.f64s(&self.rows);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MEMORY_MAGIC, MEMORY_VERSION)?;
        let k = dec.usize()?;
        let dim = dec.usize()?;
        let labels = (0..k).map(|_| dec.u32()).collect::<Result<Vec<_>>>()?;
        let count = k
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("memory size overflow".into()))?;
        let rows = dec.f64s(count)?;
        dec.finish()?;
        let mut mem = Self::new(&labels, dim)?;
        mem.rows = rows;
        Ok(mem)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::cosine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn init_memory_cases() {
        let labels: Vec<Label> = (0..10).collect();
        let m = ClassMemory::new(&labels, 4000).unwrap();
        assert_eq!(m.values().len(), 40_000);
        assert!(m.values().iter().all(|v| *v == 0.0));
        let one = ClassMemory::new(&[5], 1).unwrap();
        assert_eq!(one.values(), &[0.0]);
        assert!(matches!(ClassMemory::new(&[1, 2, 1], 4), Err(Error::DuplicateLabel(1))));
        assert!(ClassMemory::new(&[], 4).is_err());
    }

    #[test]
    fn similarities_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Hypervector::real(rand_vec(&mut rng, 32));
        let mut m = ClassMemory::new(&[0, 1, 2], 32).unwrap();
        assert_eq!(m.similarities(&h).unwrap(), vec![0.0; 3]);
        m.row_mut(0).copy_from_slice(h.values());
        let rows: Vec<Vec<f64>> = (0..2).map(|_| rand_vec(&mut rng, 32)).collect();
        m.row_mut(1).copy_from_slice(&rows[0]);
        m.row_mut(2).copy_from_slice(&rows[1]);
        let sims = m.similarities(&h).unwrap();
        assert!((sims[0] - 1.0).abs() < 1e-12);
        for i in 0..3 {
            // brute-force per-row oracle
            let row = m.row(i);
            let d: f64 = row.iter().zip(h.values()).map(|(a, b)| a * b).sum();
            let na: f64 = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nb: f64 = h.values().iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((sims[i] - d / (na * nb)).abs() < 1e-12);
        }
        assert!(m.similarities(&Hypervector::real(vec![1.0; 3])).is_err());
    }

    #[test]
    fn predict_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Hypervector::real(rand_vec(&mut rng, 16));
        let mut m = ClassMemory::new(&[7, 8], 16).unwrap();
        m.row_mut(0).copy_from_slice(h.values());
        m.row_mut(1).copy_from_slice(h.scaled(-1.0).values());
        assert_eq!(m.predict(&h).unwrap(), 7);
        m.row_mut(1).copy_from_slice(h.values());
        assert_eq!(m.predict(&h).unwrap(), 7);
        // cold start
        let empty = ClassMemory::new(&[3, 1, 2], 16).unwrap();
        assert_eq!(empty.predict(&h).unwrap(), 3);
    }

    #[test]
    fn predict_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<Label> = (0..10).collect();
        let mut m = ClassMemory::new(&labels, 200).unwrap();
        for v in m.values_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        for _ in 0..100 {
            let q = rand_vec(&mut rng, 200);
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..10 {
                let s = cosine(m.row(i), &q).unwrap();
                if s > best.1 {
                    best = (i, s);
                }
            }
            let h = Hypervector::real(q);
            assert_eq!(m.predict(&h).unwrap(), labels[best.0]);
            // positive scaling invariance
            assert_eq!(m.predict(&h.scaled(3.7)).unwrap(), labels[best.0]);
        }
    }

    #[test]
    fn aligned_correct_update_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Hypervector::real(rand_vec(&mut rng, 64));
        let mut m = ClassMemory::new(&[0, 1], 64).unwrap();
        m.row_mut(0).copy_from_slice(h.scaled(2.0).values());
        let before = m.clone();
        let out = m.update_single(&h, 0, &HdTrainConfig::default()).unwrap();
        assert!(out.correct);
        assert!(out.deltas[0].coefficient.abs() < 1e-12);
        for (a, b) in m.values().iter().zip(before.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cold_start_first_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Hypervector::real(rand_vec(&mut rng, 32));
        let cfg = HdTrainConfig {
            eta1: 0.5,
            ..Default::default()
        };
        let mut m = ClassMemory::new(&[0, 1, 2], 32).unwrap();
        let out = m.update_single(&h, 2, &cfg).unwrap();
        assert_eq!(out.predicted, 0);
        assert!(!out.correct);
        for (c, v) in m.row(2).iter().zip(h.values()) {
            assert_eq!(*c, 0.5 * v);
        }
        assert!(m.row(0).iter().all(|v| *v == 0.0));
        assert!(m.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn equal_similarity_mispredict_is_noop_on_wrong_row() {
        // l' and l rows identical → δ_l' = δ_l, predicted = lower index
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = Hypervector::real(rand_vec(&mut rng, 32));
        let r = rand_vec(&mut rng, 32);
        let mut m = ClassMemory::new(&[0, 1], 32).unwrap();
        m.row_mut(0).copy_from_slice(&r);
        m.row_mut(1).copy_from_slice(&r);
        let before = m.clone();
        let out = m.update_single(&h, 1, &HdTrainConfig::default()).unwrap();
        assert_eq!(out.predicted, 0);
        assert_eq!(out.deltas[0].coefficient, 0.0);
        assert_eq!(m, before);
    }

    #[test]
    fn mispredict_rule_and_boost() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = Hypervector::real(rand_vec(&mut rng, 32));
        let mut m = ClassMemory::new(&[0, 1], 32).unwrap();
        m.row_mut(0).copy_from_slice(h.values());
        m.row_mut(1).copy_from_slice(&rand_vec(&mut rng, 32));
        let sims = m.similarities(&h).unwrap();
        let cfg = HdTrainConfig {
            eta2: 0.25,
            boost_correct_on_error: true,
            ..Default::default()
        };
        let before = m.clone();
        let out = m.update_single(&h, 1, &cfg).unwrap();
        let margin = sims[0] - sims[1];
        assert_eq!(out.deltas.len(), 2);
        for j in 0..32 {
            let v = h.values()[j];
            assert!((m.row(0)[j] - (before.row(0)[j] - 0.25 * margin * v)).abs() < 1e-12);
            assert!((m.row(1)[j] - (before.row(1)[j] + 0.25 * margin * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn skip_when_correct_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Hypervector::real(rand_vec(&mut rng, 32));
        let mut m = ClassMemory::new(&[0, 1], 32).unwrap();
        m.row_mut(0).copy_from_slice(&rand_vec(&mut rng, 32));
        m.row_mut(0)[0] += 100.0 * h.values()[0].signum();
        let query = Hypervector::real(m.row(0).iter().zip(h.values()).map(|(a, b)| a + 0.1 * b).collect());
        let cfg = HdTrainConfig {
            skip_update_when_correct: true,
            ..Default::default()
        };
        let before = m.clone();
        let out = m.update_single(&query, 0, &cfg).unwrap();
        assert!(out.correct);
        assert!(out.deltas.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn unknown_label_errors() {
        let mut m = ClassMemory::new(&[0, 1], 4).unwrap();
        let h = Hypervector::real(vec![1.0; 4]);
        assert!(matches!(
            m.update_single(&h, 9, &HdTrainConfig::default()),
            Err(Error::UnknownLabel(9))
        ));
        assert!(m.loss_and_gradient(&h, 9).is_err());
    }

    #[test]
    fn single_pass_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = HdTrainConfig::default();
        let mut m = ClassMemory::new(&[0, 1, 2], 24).unwrap();
        let before = m.clone();
        let stats = m.train_single_pass(std::iter::empty(), &cfg).unwrap();
        assert!(stats.correct.is_empty());
        assert_eq!(m, before);

        let h = Hypervector::real(rand_vec(&mut rng, 24));
        let mut a = m.clone();
        let mut b = m.clone();
        a.train_single_pass([(&h, 1)], &cfg).unwrap();
        b.update_single(&h, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturation_bounds_row_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = Hypervector::real(rand_vec(&mut rng, 64));
        let mut m = ClassMemory::new(&[0, 1], 64).unwrap();
        let cfg = HdTrainConfig::default();
        for _ in 0..1000 {
            m.update_single(&h, 0, &cfg).unwrap();
        }
        let norm: f64 = m.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0001 * h.norm(), "{norm}");
    }

    #[test]
    fn loss_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Hypervector::real(rand_vec(&mut rng, 16));
        // uniform similarities: all-zero memory
        let m = ClassMemory::new(&[0, 1, 2, 3], 16).unwrap();
        let (loss, grad) = m.loss_and_gradient(&h, 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(grad.iter().all(|g| *g == 0.0));

        let mut strong = ClassMemory::new(&[0, 1], 16).unwrap();
        strong.row_mut(0).copy_from_slice(h.values());
        strong.row_mut(1).copy_from_slice(h.scaled(-1.0).values());
        let (loss, grad) = strong.loss_and_gradient(&h, 0).unwrap();
        // δ = (1, −1) → loss = ln(1 + e⁻²), the saturated minimum at temperature 1
        assert!((loss - (1.0 + (-2f64).exp()).ln()).abs() < 1e-12);
        assert!(grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-12);
        let (wrong, _) = strong.loss_and_gradient(&h, 1).unwrap();
        assert!(wrong > loss);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (k, d) in [(2, 10), (3, 40), (5, 100)] {
            let labels: Vec<Label> = (0..k as u32).collect();
            let mut m = ClassMemory::new(&labels, d).unwrap();
            for v in m.values_mut() {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
            let q = rand_vec(&mut rng, d);
            let label = rng.random_range(0..k as u32);
            let (_, grad) = m.loss_and_gradient(&Hypervector::real(q.clone()), label).unwrap();
            let step = 1e-6;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..d {
                let mut up = q.clone();
                let mut dn = q.clone();
                up[j] += step;
                dn[j] -= step;
                let lu = m.loss_and_gradient(&Hypervector::real(up), label).unwrap().0;
                let ld = m.loss_and_gradient(&Hypervector::real(dn), label).unwrap().0;
                let fd = (lu - ld) / (2.0 * step);
                num += (fd - grad[j]).powi(2);
                den += fd * fd;
            }
            assert!((num / den).sqrt() < 1e-4, "k={k} d={d}");
        }
    }

    #[test]
    fn memory_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut m = ClassMemory::new(&[4, 2, 9], 17).unwrap();
        for v in m.values_mut() {
            *v = rng.random::<f64>();
        }
        let back = ClassMemory::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(m, back);
        let bytes = m.to_bytes();
        assert!(ClassMemory::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
