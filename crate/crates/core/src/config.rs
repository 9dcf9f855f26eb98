//! JSON run configuration shared by `train` and `ablate`.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "data_dir": "data",
//!   "out_dir": "runs/desk",
//!   "stages": [
//!     {"stage": 1, "resolution": 48, "fraction": 0.9, "lr": 0.001, "epochs": 30},
//!     {"stage": 2, "resolution": 64, "fraction": 0.9, "lr": 0.0001, "epochs": 10},
//!     {"stage": 3, "resolution": 64, "fraction": 1.0, "lr": 0.0001, "epochs": 10}
//!   ],
//!   "loss": {"lambda": 1.0},
//!   "swa": {"enabled": true, "frequency": 1},
//!   "eval": {"resolution": 64},
//!   "limits": {"params": 5e6, "macs": 2.5e8}
//! }
//! ```
//!
//! Every key except `data_dir` and `out_dir` has a default. Relative paths are
//! resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::micronet::{ArchConfig, MIN_RESOLUTION};
use crate::profiler::Limits;
use crate::trainer::{validate_plans, AdamWConfig, LrSchedule, StagePlan, SwaConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub resolution: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { resolution: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub augment: AugmentConfig,
    pub optimizer: AdamWConfig,
    pub schedule: LrSchedule,
    pub bn_momentum: f64,
    pub select_best: bool,
    pub probe_forgetting: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            augment: t.augment,
            optimizer: t.optimizer,
            schedule: t.schedule,
            bn_momentum: t.bn_momentum,
            select_best: t.select_best,
            probe_forgetting: true,
        }
    }
}

fn default_val_fraction() -> f64 {
    0.1
}

fn default_stages() -> Vec<StagePlan> {
    StagePlan::desk().to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Directory containing `manifest.csv`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Share of the data held out of every stage for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default = "default_stages")]
    pub stages: Vec<StagePlan>,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub swa: SwaConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub train: TrainSection,
}

impl RunConfig {
    /// Desk defaults around the given directories.
    pub fn desk(data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            seed: 0,
            data_dir: data_dir.into(),
            out_dir: out_dir.into(),
            val_fraction: default_val_fraction(),
            arch: ArchConfig::desk(),
            stages: default_stages(),
            loss: LossConfig::default(),
            swa: SwaConfig::default(),
            eval: EvalSection::default(),
            limits: Limits::default(),
            train: TrainSection::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::Config(format!(
                "{} (line {}, column {}): {inner}",
                e.path(),
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data_dir = base.join(&cfg.data_dir);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        validate_plans(&self.stages)?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction = {} must be in [0, 1)",
                self.val_fraction
            )));
        }
        if self.eval.resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "eval.resolution = {} is below {MIN_RESOLUTION}",
                self.eval.resolution
            )));
        }
        if self.swa.frequency == 0 {
            return Err(Error::Config("swa.frequency must be >= 1".into()));
        }
        if let Some(s) = self.swa.stage {
            if s == 0 || s as usize > self.stages.len() {
                return Err(Error::Config(format!("swa.stage = {s} names no configured stage")));
            }
        }
        if !(self.limits.params > 0.0 && self.limits.macs > 0.0) {
            return Err(Error::Config("limits.params and limits.macs must be positive".into()));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            augment: self.train.augment,
            optimizer: self.train.optimizer,
            schedule: self.train.schedule,
            loss: self.loss,
            bn_momentum: self.train.bn_momentum,
            eval_resolution: self.eval.resolution,
            select_best: self.train.select_best,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_dir.join("manifest.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_desk_defaults() {
        let cfg = RunConfig::from_json(r#"{"data_dir": "d", "out_dir": "o"}"#).unwrap();
        assert_eq!(cfg.stages, StagePlan::desk().to_vec());
        assert_eq!(cfg.loss.lambda, 1.0);
        assert_eq!(cfg.eval.resolution, 64);
        assert_eq!(cfg, RunConfig::desk("d", "o"));
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::desk("d", "o");
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"data_dir": "d", "out_dir": "o", "loss": {"lambda": "x"}}"#).unwrap_err();
        assert!(e.to_string().contains("loss.lambda"), "{e}");
        let e = RunConfig::from_json(r#"{"data_dir": "d", "out_dir": "o", "bogus": 1}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn decreasing_resolution_is_rejected() {
        let mut cfg = RunConfig::desk("d", "o");
        cfg.stages[1].resolution = 32;
        let e = RunConfig::from_json(&cfg.to_json()).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("stages[1].resolution")), "{e}");
    }
}
