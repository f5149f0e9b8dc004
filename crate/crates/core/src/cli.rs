//! `spikehd train | eval | sweep | inspect`.
//!
//! Outputs are staged in a hidden directory under the output directory and
//! moved into place only when the command succeeds. On failure the staged
//! files go to `quarantine/<command>-<hash prefix>/` with an `error.txt`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bench::{run_sweep, SweepResult, SweepTask};
use crate::config::RunConfig;
use crate::data::SpikeDataset;
use crate::error::{Error, Result};
use crate::memory::Label;
use crate::pipeline::SpikeHdModel;
use crate::report::{self, EvalReport, RunReport, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "spikehd", version, about = "Train and evaluate spiking front-end + hyperdimensional classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Steps I to III and write a checkpoint, logs and a summary.
    Train(RunArgs),
    /// Accuracy and confusion counts of a checkpoint on one split.
    Eval(EvalArgs),
    /// Run the sweep declared in the config.
    Sweep(RunArgs),
    /// Print checkpoint metadata.
    Inspect {
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "SPIKEHD_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, env = "SPIKEHD_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl RunArgs {
    /// Loads the config and applies flag and environment overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::Config(vec!["workers: must be at least 1".into()]));
            }
            cfg.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}

fn staged<T>(cfg: &RunConfig, command: &str, f: impl FnOnce(&Path, &str) -> Result<T>) -> Result<T> {
    let hash = cfg.hash()?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    let stage = out.join(format!(".staging-{command}-{}", std::process::id()));
    if stage.exists() {
        std::fs::remove_dir_all(&stage)?;
    }
    std::fs::create_dir_all(&stage)?;
    match f(&stage, &hash) {
        Ok(v) => {
            for entry in std::fs::read_dir(&stage)? {
                let entry = entry?;
                std::fs::rename(entry.path(), out.join(entry.file_name()))?;
            }
            std::fs::remove_dir(&stage)?;
            Ok(v)
        }
        Err(e) => {
            let q = out.join("quarantine").join(format!("{command}-{}", &hash[..12]));
            if q.exists() {
                std::fs::remove_dir_all(&q)?;
            }
            std::fs::create_dir_all(out.join("quarantine"))?;
            std::fs::rename(&stage, &q)?;
            std::fs::write(q.join("error.txt"), format!("{e}\n"))?;
            Err(e)
        }
    }
}

fn union_labels(a: &SpikeDataset, b: &SpikeDataset) -> Vec<Label> {
    let mut labels: Vec<Label> = a.labels.iter().chain(&b.labels).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}

fn write_resolved(dir: &Path, cfg: &RunConfig, hash: &str) -> Result<()> {
    let text = format!("# config_hash = \"{hash}\"\n{}", cfg.resolve().to_toml()?);
    std::fs::write(dir.join("resolved_config.toml"), text)?;
    Ok(())
}

/// Steps I to III per the config. Writes `model.shdk`, `epochs.csv`,
/// `final.csv`, `resolved_config.toml`, `report.json` and `summary.txt`.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunReport> {
    cfg.check()?;
    with_pool(cfg.workers, || {
        staged(cfg, "train", |dir, hash| {
            let resolved = cfg.resolve();
            write_resolved(dir, cfg, hash)?;
            let (train, test) = cfg.datasets()?;
            let labels = union_labels(&train, &test);
            let mut model = SpikeHdModel::new(&resolved.model, train.channels(), &labels, cfg.model_seed())?;
            let phases = &resolved.phases;
            let mut seconds = BTreeMap::new();
            let mut logs = Vec::new();

            let t = Instant::now();
            logs.push(model.step1_train_snn(&train, Some(&test), phases)?);
            seconds.insert("step1".to_string(), t.elapsed().as_secs_f64());
            let t = Instant::now();
            logs.push(model.step2_train_hdc(&train, Some(&test), phases)?);
            seconds.insert("step2".to_string(), t.elapsed().as_secs_f64());
            let t = Instant::now();
            logs.push(model.step3_cotrain(&train, Some(&test), phases)?);
            seconds.insert("step3".to_string(), t.elapsed().as_secs_f64());

            let mut final_accuracy = BTreeMap::new();
            final_accuracy.insert("train".to_string(), model.evaluate(&train)?);
            final_accuracy.insert("test".to_string(), model.evaluate(&test)?);

            model.save(&dir.join("model.shdk"))?;
            report::write_epoch_csv(&dir.join("epochs.csv"), hash, &logs)?;
            report::write_final_csv(&dir.join("final.csv"), hash, &final_accuracy)?;
            let rep = RunReport {
                schema_version: SCHEMA_VERSION,
                config_hash: hash.to_string(),
                resolved_config: resolved,
                logs,
                final_accuracy,
                phase_seconds: seconds,
                checkpoint: Some(cfg.out_dir.join("model.shdk")),
            };
            report::write_json(&dir.join("report.json"), &rep)?;
            std::fs::write(dir.join("summary.txt"), report::summary_text(&rep))?;
            Ok(rep)
        })
    })
}

/// Per-sample predictions of `checkpoint` on one split. Writes
/// `eval_<split>_{metrics,confusion,predictions}.csv`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<EvalReport> {
    cfg.check()?;
    with_pool(cfg.workers, || {
        staged(cfg, "eval", |dir, hash| {
            let model = SpikeHdModel::load(checkpoint)?;
            let (train, test) = cfg.datasets()?;
            let data = match split {
                Split::Train => train,
                Split::Test => test,
            };
            if data.channels() != model.network().input_dim() {
                return Err(Error::Shape {
                    expected: model.network().input_dim(),
                    actual: data.channels(),
                    context: "dataset channels versus checkpoint input width",
                });
            }
            let predictions: Vec<(Label, Label)> = data
                .samples
                .par_iter()
                .map(|(s, label)| Ok((*label, model.predict_end_to_end(s)?)))
                .collect::<Result<_>>()?;
            let rep = EvalReport::new(hash, split.name(), model.labels(), predictions);
            report::write_eval(dir, &format!("eval_{}", split.name()), &rep)?;
            Ok(rep)
        })
    })
}

/// Runs the config's sweep. Writes `sweep.csv`, `sweep_timing.csv`,
/// `sweep_summary.json`, `sweep_plot.json` and `resolved_config.toml`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.check()?;
    let Some(_) = &cfg.sweep else {
        return Err(Error::Config(vec!["sweep: the sweep command needs a [sweep] section".into()]));
    };
    with_pool(cfg.workers, || {
        staged(cfg, "sweep", |dir, hash| {
            let resolved = cfg.resolve();
            write_resolved(dir, cfg, hash)?;
            let (train, test) = cfg.datasets()?;
            let task = SweepTask {
                model: resolved.model.clone(),
                phases: resolved.phases.clone(),
                train,
                test,
            };
            let spec = resolved.sweep.as_ref().expect("checked above");
            let result = run_sweep(spec, &task)?;
            report::write_sweep_csv(&dir.join("sweep.csv"), hash, &result)?;
            report::write_timing_csv(&dir.join("sweep_timing.csv"), hash, &result)?;
            report::write_json(&dir.join("sweep_summary.json"), &report::sweep_summary(hash, &result))?;
            report::write_json(&dir.join("sweep_plot.json"), &report::plot_spec(hash, &result))?;
            Ok(result)
        })
    })
}

/// Human-readable checkpoint metadata.
pub fn cmd_inspect(checkpoint: &Path) -> Result<String> {
    let m = SpikeHdModel::load(checkpoint)?;
    let c = m.config();
    let mut out = String::new();
    let _ = writeln!(out, "phase: {}", m.phase());
    let _ = writeln!(out, "input channels: {}", m.network().input_dim());
    let _ = writeln!(out, "layer sizes: {:?}", m.network().sizes());
    let _ = writeln!(out, "snn weights: {}", m.network().weight_count());
    let _ = writeln!(out, "injection depth: {} ({:?})", c.injection_depth, c.pooling);
    let _ = writeln!(out, "hypervector dimension: {}", m.basis().dim());
    let _ = writeln!(out, "activation: {:?}, sigma {}", m.basis().activation(), m.basis().sigma());
    let _ = writeln!(out, "labels: {:?}", m.labels());
    Ok(out)
}

/// Entry point behind the binary. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Train(a) => a.resolve().and_then(|c| cmd_train(&c)).map(|r| report::summary_text(&r)),
        Command::Eval(a) => a
            .run
            .resolve()
            .and_then(|c| cmd_eval(&c, &a.checkpoint, a.split))
            .map(|r| format!("{} accuracy {:.4} over {} samples\n", r.split, r.accuracy, r.samples)),
        Command::Sweep(a) => a.resolve().and_then(|c| cmd_sweep(&c)).map(|r| {
            report::sweep_summary("", &r)
                .aggregates
                .iter()
                .map(|g| format!("{} = {} {}: {:.4} ± {:.4}\n", r.axis.name(), g.axis_value, g.metric, g.mean, g.std))
                .collect()
        }),
        Command::Inspect { checkpoint } => cmd_inspect(checkpoint),
    };
    match outcome {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
