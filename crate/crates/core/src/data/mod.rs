//! Datasets, rate coding, and synthetic desk-scale tasks.

mod idx;
mod synth;
mod table;

pub use idx::{load_idx, read_idx, write_idx_images, write_idx_labels, IdxArray};
pub use synth::{synth_blobs, synth_digits};
pub use table::{load_csv, load_csv_with, MinMaxScaler};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::Label;
use crate::seed;
use crate::spikes::SpikeTrain;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: Label,
}

/// Labeled dense feature vectors with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDataset {
    pub name: String,
    pub split: String,
    pub labels: Vec<Label>,
    pub samples: Vec<Sample>,
}

impl DenseDataset {
    /// Clamps values into `[0, 1]` and checks every label is declared.
    pub fn new(name: &str, split: &str, labels: Vec<Label>, mut samples: Vec<Sample>) -> Result<Self> {
        for s in &mut samples {
            if !labels.contains(&s.label) {
                return Err(Error::UnknownLabel(s.label));
            }
            for v in &mut s.values {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("non-finite value {v}")));
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self {
            name: name.to_string(),
            split: split.to_string(),
            labels,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.values.len())
    }

    /// First `n` samples as one split, the rest as another.
    pub fn split_at(&self, n: usize) -> (DenseDataset, DenseDataset) {
        let n = n.min(self.len());
        let mk = |split: &str, samples: &[Sample]| DenseDataset {
            name: self.name.clone(),
            split: split.to_string(),
            labels: self.labels.clone(),
            samples: samples.to_vec(),
        };
        (
            mk(&format!("{}-head", self.split), &self.samples[..n]),
            mk(&format!("{}-tail", self.split), &self.samples[n..]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateCodeConfig {
    /// Number of time steps `T`.
    pub steps: usize,
    /// Per-step firing probability at intensity 1.
    pub max_rate: f64,
    pub seed: u64,
}

impl Default for RateCodeConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            max_rate: 1.0,
            seed: 0,
        }
    }
}

impl RateCodeConfig {
    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if self.steps == 0 {
            errors.push(format!("{path}.steps: must be at least 1"));
        }
        if !(self.max_rate > 0.0 && self.max_rate <= 1.0) {
            errors.push(format!("{path}.max_rate: must lie in (0, 1], got {}", self.max_rate));
        }
    }
}

/// Bernoulli rate coding: `events[t][j] ~ Bernoulli(value_j · max_rate)`,
/// drawn from a generator seeded by `(cfg.seed, sample_index)`.
pub fn rate_encode(values: &[f64], cfg: &RateCodeConfig, sample_index: u64) -> Result<SpikeTrain> {
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("rate coding needs at least one step".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "rate-coded value {v} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(cfg.seed, "rate", sample_index));
    let mut train = SpikeTrain::silent(cfg.steps, values.len());
    for t in 0..cfg.steps {
        for (j, v) in values.iter().enumerate() {
            // one draw per cell keeps the stream layout independent of values
            let u: f64 = rng.random();
            if u < v * cfg.max_rate {
                train.set(t, j, true);
            }
        }
    }
    Ok(train)
}

/// Rate-coded samples ready for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDataset {
    pub labels: Vec<Label>,
    pub samples: Vec<(SpikeTrain, Label)>,
}

impl SpikeDataset {
    /// Rate-codes every sample, using its position as the sample index.
    pub fn from_dense(dataset: &DenseDataset, cfg: &RateCodeConfig) -> Result<Self> {
        let samples = dataset
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Ok((rate_encode(&s.values, cfg, i as u64)?, s.label)))
            .collect::<Result<_>>()?;
        Ok(Self {
            labels: dataset.labels.clone(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |(t, _)| t.channels())
    }

    /// Copy of the samples at `indices`, in that order.
    pub fn subset(&self, indices: std::ops::Range<usize>) -> SpikeDataset {
        SpikeDataset {
            labels: self.labels.clone(),
            samples: self.samples[indices].to_vec(),
        }
    }
}

/// Block-mean pooling of square images by `factor`.
pub fn downscale(dataset: &DenseDataset, factor: usize) -> Result<DenseDataset> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downscale factor must be positive".into()));
    }
    let mut samples = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        samples.push(Sample {
            values: downscale_image(&s.values, factor)?,
            label: s.label,
        });
    }
    Ok(DenseDataset {
        name: dataset.name.clone(),
        split: dataset.split.clone(),
        labels: dataset.labels.clone(),
        samples,
    })
}

fn downscale_image(pixels: &[f64], factor: usize) -> Result<Vec<f64>> {
    let side = (pixels.len() as f64).sqrt().round() as usize;
    if side * side != pixels.len() {
        return Err(Error::InvalidArgument(format!(
            "image with {} pixels is not square",
            pixels.len()
        )));
    }
    if side % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} does not divide side {side}"
        )));
    }
    let out_side = side / factor;
    let norm = (factor * factor) as f64;
    let mut out = vec![0.0; out_side * out_side];
    for (oy, row) in out.chunks_mut(out_side).enumerate() {
        for (ox, cell) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += pixels[(oy * factor + dy) * side + ox * factor + dx];
                }
            }
            *cell = acc / norm;
        }
    }
    Ok(out)
}
