//! Declarative experiment configuration.
//!
//! A run is described by one TOML file with `version = 1`. Every seed used
//! anywhere in a run is derived from the master `seed` with
//! [`crate::seed::derive`]; seed fields inside sub-sections are overwritten
//! during [`RunConfig::resolve`] and echoed in the resolved artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::SweepSpec;
use crate::data::{
    downscale, load_csv, load_csv_with, load_idx, synth_blobs, synth_digits, DenseDataset,
    RateCodeConfig, SpikeDataset,
};
use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, PhaseConfig};
use crate::seed;

pub const CONFIG_VERSION: u32 = 1;

/// Where the train and test splits come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Procedural 28×28 digits, average-pooled by `downscale`.
    SynthDigits {
        #[serde(default = "default_train_count")]
        train_count: usize,
        #[serde(default = "default_test_count")]
        test_count: usize,
        #[serde(default = "default_downscale")]
        downscale: usize,
    },
    /// Gaussian blobs; the first `train_count` samples form the train split.
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        train_count: usize,
    },
    Idx {
        #[serde(default)]
        train_images: PathBuf,
        #[serde(default)]
        train_labels: Option<PathBuf>,
        #[serde(default)]
        test_images: PathBuf,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "one")]
        downscale: usize,
    },
    /// Headered CSVs; scaling is fitted on the train file.
    Csv {
        #[serde(default)]
        train: PathBuf,
        #[serde(default)]
        test: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
}

fn default_train_count() -> usize {
    2000
}

fn default_test_count() -> usize {
    500
}

fn default_downscale() -> usize {
    2
}

fn one() -> usize {
    1
}

fn default_label_column() -> String {
    "label".into()
}

fn default_workers() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::SynthDigits {
            train_count: default_train_count(),
            test_count: default_test_count(),
            downscale: default_downscale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Rayon pool size.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub rate_code: RateCodeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub phases: PhaseConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out_dir: default_out_dir(),
            workers: default_workers(),
            dataset: DatasetSource::default(),
            rate_code: RateCodeConfig::default(),
            model: ModelConfig::default(),
            phases: PhaseConfig::default(),
            sweep: None,
        }
    }
}

fn check_file(path: &Path, field: &str, errors: &mut Vec<String>) {
    if path.as_os_str().is_empty() {
        errors.push(format!("{field}: required"));
    } else if !path.is_file() {
        errors.push(format!("{field}: file {} not found", path.display()));
    }
}

impl RunConfig {
    /// Parses and validates, reporting every problem at once.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative dataset paths are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e.message())]))?;
        if let Some(dir) = path.parent() {
            cfg.dataset.rebase(dir);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let errors = self.validate();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// All validation failures, each prefixed by its field path.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.version != CONFIG_VERSION {
            errors.push(format!(
                "version: unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.workers == 0 {
            errors.push("workers: must be at least 1".into());
        }
        match &self.dataset {
            DatasetSource::SynthDigits {
                train_count,
                test_count,
                downscale,
            } => {
                if *train_count == 0 {
                    errors.push("dataset.train_count: must be positive".into());
                }
                if *test_count == 0 {
                    errors.push("dataset.test_count: must be positive".into());
                }
                if *downscale == 0 || 28 % downscale != 0 {
                    errors.push(format!("dataset.downscale: must divide 28, got {downscale}"));
                }
            }
            DatasetSource::Blobs {
                classes,
                dim,
                per_class,
                spread,
                train_count,
            } => {
                if *classes == 0 || *dim == 0 || *per_class == 0 {
                    errors.push("dataset: classes, dim and per_class must be positive".into());
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    errors.push("dataset.spread: must be non-negative".into());
                }
                if *train_count == 0 || *train_count >= classes * per_class {
                    errors.push(format!(
                        "dataset.train_count: must lie in 1..{}",
                        classes * per_class
                    ));
                }
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                downscale,
            } => {
                check_file(train_images, "dataset.train_images", &mut errors);
                check_file(test_images, "dataset.test_images", &mut errors);
                if let Some(p) = train_labels {
                    check_file(p, "dataset.train_labels", &mut errors);
                }
                if let Some(p) = test_labels {
                    check_file(p, "dataset.test_labels", &mut errors);
                }
                if *downscale == 0 {
                    errors.push("dataset.downscale: must be positive".into());
                }
            }
            DatasetSource::Csv {
                train,
                test,
                label_column,
            } => {
                check_file(train, "dataset.train", &mut errors);
                check_file(test, "dataset.test", &mut errors);
                if label_column.is_empty() {
                    errors.push("dataset.label_column: required".into());
                }
            }
        }
        self.rate_code.validate("rate_code", &mut errors);
        self.model.validate("model", &mut errors);
        self.phases.validate("phases", &mut errors);
        if let Some(s) = &self.sweep {
            s.validate("sweep", &mut errors);
        }
        errors
    }

    /// Seed for everything a run trains; a train run is repeat 0 of any
    /// sweep over the same config.
    pub fn model_seed(&self) -> u64 {
        seed::derive_indexed(self.sweep_seed(), "repeat", 0)
    }

    pub fn sweep_seed(&self) -> u64 {
        seed::derive(self.seed, "run")
    }

    /// Copy with every derived seed filled in.
    pub fn resolve(&self) -> RunConfig {
        let mut r = self.clone();
        r.rate_code.seed = seed::derive(self.seed, "rate-code");
        r.phases.seed = seed::derive(self.model_seed(), "phases");
        if let Some(s) = r.sweep.as_mut() {
            s.seed = self.sweep_seed();
        }
        r
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the resolved config with output location and worker count
    /// blanked, since neither affects any metric.
    pub fn hash(&self) -> Result<String> {
        let mut r = self.resolve();
        r.out_dir = PathBuf::new();
        r.workers = 1;
        let digest = Sha256::digest(r.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Loads or generates both splits and rate-codes them.
    pub fn datasets(&self) -> Result<(SpikeDataset, SpikeDataset)> {
        let (train, test) = self.dense_datasets()?;
        let rc = self.resolve().rate_code;
        let train_rc = RateCodeConfig {
            seed: seed::derive(rc.seed, "train"),
            ..rc
        };
        let test_rc = RateCodeConfig {
            seed: seed::derive(rc.seed, "test"),
            ..rc
        };
        Ok((
            SpikeDataset::from_dense(&train, &train_rc)?,
            SpikeDataset::from_dense(&test, &test_rc)?,
        ))
    }

    pub fn dense_datasets(&self) -> Result<(DenseDataset, DenseDataset)> {
        let data_seed = seed::derive(self.seed, "dataset");
        match &self.dataset {
            DatasetSource::SynthDigits {
                train_count,
                test_count,
                downscale: factor,
            } => {
                let all = synth_digits(train_count + test_count, data_seed)?;
                let all = if *factor > 1 { downscale(&all, *factor)? } else { all };
                Ok(all.split_at(*train_count))
            }
            DatasetSource::Blobs {
                classes,
                dim,
                per_class,
                spread,
                train_count,
            } => Ok(synth_blobs(*classes, *dim, *per_class, *spread, data_seed)?.split_at(*train_count)),
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                downscale: factor,
            } => {
                let train = load_idx(train_images, train_labels.as_deref())?;
                let test = load_idx(test_images, test_labels.as_deref())?;
                if *factor > 1 {
                    Ok((downscale(&train, *factor)?, downscale(&test, *factor)?))
                } else {
                    Ok((train, test))
                }
            }
            DatasetSource::Csv {
                train,
                test,
                label_column,
            } => {
                let (tr, scaler) = load_csv(train, label_column)?;
                let te = load_csv_with(test, label_column, &scaler)?;
                Ok((tr, te))
            }
        }
    }
}

impl DatasetSource {
    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match self {
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(train_images);
                fix(test_images);
                if let Some(p) = train_labels.as_mut() {
                    fix(p);
                }
                if let Some(p) = test_labels.as_mut() {
                    fix(p);
                }
            }
            DatasetSource::Csv { train, test, .. } => {
                fix(train);
                fix(test);
            }
            _ => {}
        }
    }
}
