//! `mspt` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 any other failure.
//! Reports go to stdout (or `--out`), diagnostics to stderr.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::ablation::{write_rows, Ablation};
use crate::config::RunConfig;
use crate::data::{dataset_stats, generate_dataset, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::micronet::{build_model, load_checkpoint, save_checkpoint, ArchConfig, ModelState};
use crate::profiler::{profile, Limits};
use crate::trainer::{evaluate_model, holdout_split, Pipeline};

#[derive(Debug, Parser)]
#[command(name = "mspt", version, about = "Multi-stage progressive training for image quality regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic quality-labelled dataset.
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Size and aspect-ratio histograms of a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the staged curriculum described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Accepted for compatibility; training is always single-threaded and reproducible.
        #[arg(long)]
        deterministic: bool,
    },
    /// Score a checkpoint, or a predictions CSV (`path,prediction`), against a manifest.
    Eval {
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Architecture JSON; defaults to the desk network.
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter count, MACs and runtime, checked against efficiency limits.
    Profile {
        /// Defaults to a freshly initialised network.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long)]
        max_params: Option<f64>,
        #[arg(long)]
        max_macs: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage vs three-stage, with and without weight averaging.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated; defaults to the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        deterministic: bool,
    },
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Constraint(msg)) => {
            eprintln!("error: constraint violated: {msg}");
            1
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

enum Failure {
    Error(Error),
    Constraint(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_arch(path: Option<&Path>) -> Result<ArchConfig> {
    match path {
        None => Ok(ArchConfig::desk()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let arch: ArchConfig =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            arch.validate()?;
            Ok(arch)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let manifest = Manifest::load(cfg.manifest_path())?;
    let (train, val) = holdout_split(&manifest, cfg.val_fraction, cfg.seed)?;
    let all = Dataset::load(&manifest)?;
    Ok((all.restrict(&train)?, all.restrict(&val)?))
}

#[derive(Serialize)]
struct StageSummary {
    stage: u8,
    resolution: usize,
    samples: usize,
    epochs: usize,
    final_loss: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    train_samples: usize,
    val_samples: usize,
    stages: Vec<StageSummary>,
    val: Option<crate::metrics::EvalReport>,
    forgetting: Option<crate::trainer::ForgettingReport>,
    checkpoints: Vec<PathBuf>,
    runlog: PathBuf,
    seconds: f64,
}

fn cmd_train(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let started = Instant::now();
    let (train, val) = load_split(&cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let tc = cfg.train_config();
    let out = Pipeline {
        arch: &cfg.arch,
        plans: &cfg.stages,
        train: &train,
        val: (!val.is_empty()).then_some(&val),
        config: &tc,
        swa: cfg.swa,
        seed: cfg.seed,
        probe_forgetting: cfg.train.probe_forgetting,
    }
    .run()?;

    let mut checkpoints = Vec::new();
    for s in &out.stages {
        let p = cfg.out_dir.join(format!("stage{}.ckpt", s.plan.stage));
        save_checkpoint(&s.model, &p)?;
        checkpoints.push(p);
    }
    if let Some(m) = &out.swa_model {
        let p = cfg.out_dir.join("swa.ckpt");
        save_checkpoint(m, &p)?;
        checkpoints.push(p);
    }
    let runlog = cfg.out_dir.join("runlog.jsonl");
    out.log.write(&runlog)?;
    let summary = TrainSummary {
        seed: cfg.seed,
        train_samples: train.len(),
        val_samples: val.len(),
        stages: out
            .stages
            .iter()
            .map(|s| StageSummary {
                stage: s.plan.stage,
                resolution: s.plan.resolution,
                samples: s.touched.len(),
                epochs: s.plan.epochs,
                final_loss: s.log.records.last().map(|r| r.loss),
            })
            .collect(),
        val: out.val_report,
        forgetting: out.forgetting,
        checkpoints,
        runlog,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    emit(&summary, None)
}

fn read_predictions(path: &Path, manifest: &Manifest) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.iter().ne(["path", "prediction"]) {
        return Err(Error::Format(format!("{}: header must be path,prediction", path.display())));
    }
    let mut by_path = HashMap::new();
    for rec in r.deserialize::<(String, f64)>() {
        let (p, v) = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if by_path.insert(p.clone(), v).is_some() {
            return Err(Error::Format(format!("{}: duplicate prediction for {p}", path.display())));
        }
    }
    manifest
        .samples()
        .iter()
        .map(|s| {
            by_path
                .get(&s.path)
                .copied()
                .ok_or_else(|| Error::Format(format!("{}: no prediction for {}", path.display(), s.path)))
        })
        .collect()
}

fn load_model(checkpoint: Option<&Path>, arch: &ArchConfig) -> Result<ModelState> {
    match checkpoint {
        Some(p) => load_checkpoint(p, arch),
        None => build_model(arch, 0),
    }
}

fn execute(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Generate { count, seed, out } => {
            let m = generate_dataset(count as usize, seed, &out)?;
            eprintln!("wrote {} samples to {}", m.len(), out.join("manifest.csv").display());
        }
        Command::Stats { manifest, out } => {
            let m = Manifest::load(&manifest)?;
            emit(&dataset_stats(&m)?, out.as_deref())?;
        }
        Command::Train { config, .. } => cmd_train(&config)?,
        Command::Eval {
            checkpoint,
            predictions,
            manifest,
            resolution,
            arch,
            out,
        } => {
            let m = Manifest::load(&manifest)?;
            let report = match predictions {
                Some(p) => evaluate(&read_predictions(&p, &m)?, &m.labels())?,
                None => {
                    let arch = load_arch(arch.as_deref())?;
                    let model = load_model(checkpoint.as_deref(), &arch)?;
                    evaluate_model(&model, &Dataset::load(&m)?, resolution, 32)?
                }
            };
            emit(&report, out.as_deref())?;
        }
        Command::Profile {
            checkpoint,
            arch,
            resolution,
            warmup,
            repeats,
            max_params,
            max_macs,
            out,
        } => {
            let arch = load_arch(arch.as_deref())?;
            let model = load_model(checkpoint.as_deref(), &arch)?;
            let mut limits = Limits::default();
            if let Some(p) = max_params {
                limits.params = p;
            }
            if let Some(m) = max_macs {
                limits.macs = m;
            }
            let report = profile(&model, resolution, (repeats > 0).then_some((warmup, repeats)), &limits)?;
            emit(&report, out.as_deref())?;
            if !report.constraints.passed() {
                return Err(Failure::Constraint(report.constraints.violations.join("; ")));
            }
        }
        Command::Ablate { config, seeds, .. } => {
            let cfg = RunConfig::load(&config)?;
            let (train, test) = load_split(&cfg)?;
            if test.len() < 2 {
                return Err(Error::Config("ablation scores on the validation split; val_fraction leaves it empty".into()).into());
            }
            let tc = cfg.train_config();
            let ab = Ablation {
                arch: &cfg.arch,
                plans: &cfg.stages,
                train: &train,
                test: &test,
                config: &tc,
                swa_frequency: cfg.swa.frequency,
            };
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            let mut rows = Vec::new();
            for s in seeds {
                rows.extend(ab.run(s)?);
            }
            write_rows(&rows, &cfg.out_dir)?;
            emit(&rows, None)?;
        }
    }
    Ok(())
}
