use serde::{Deserialize, Serialize};

use super::eval::evaluate_model;
use super::probe::{forgetting_probe, ForgettingReport};
use super::runlog::RunLog;
use super::stage::{run_stage, InitSource, StageOutcome, StagePlan, TrainConfig};
use crate::data::{batch_tensor, partition, resize_eval, split_manifest, Dataset, Image, Manifest};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::micronet::{average_weights, build_model, recompute_bn_stats, ArchConfig, ModelState};
use crate::tensor::Tensor;

const SPLIT_SALT: u64 = 0x5eed_0001;
const HOLDOUT_SALT: u64 = 0x5eed_0002;

/// Weight averaging over the end-of-epoch snapshots of one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwaConfig {
    pub enabled: bool,
    /// Stage whose snapshots are averaged; `None` means the last one.
    pub stage: Option<u8>,
    /// Snapshot every this many epochs.
    pub frequency: usize,
}

impl Default for SwaConfig {
    fn default() -> Self {
        SwaConfig {
            enabled: true,
            stage: None,
            frequency: 1,
        }
    }
}

impl SwaConfig {
    pub fn disabled() -> Self {
        SwaConfig {
            enabled: false,
            ..Default::default()
        }
    }
}

/// Split generated data into training and validation parts.
pub fn holdout_split(m: &Manifest, val_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("validation fraction {val_fraction} must be in [0, 1)")));
    }
    partition(m, 1.0 - val_fraction, seed ^ HOLDOUT_SALT)
}

/// Check stage numbering, initialisation chain, resolution and data ordering.
pub fn validate_plans(plans: &[StagePlan]) -> Result<()> {
    if plans.is_empty() {
        return Err(Error::Config("at least one stage is required".into()));
    }
    for (i, p) in plans.iter().enumerate() {
        p.validate()?;
        if p.stage as usize != i + 1 {
            return Err(Error::Config(format!("stages[{i}].stage is {}, expected {}", p.stage, i + 1)));
        }
        let want = if i == 0 { InitSource::Fresh } else { InitSource::Previous };
        if p.init_source() != want {
            return Err(Error::Config(format!("stages[{i}].init must be {want:?}")));
        }
        if i > 0 {
            let prev = &plans[i - 1];
            if p.resolution < prev.resolution {
                return Err(Error::Config(format!(
                    "stages[{i}].resolution {} is below the previous stage's {}; resolution may not decrease",
                    p.resolution, prev.resolution
                )));
            }
            if p.fraction < prev.fraction {
                return Err(Error::Config(format!(
                    "stages[{i}].fraction {} is below the previous stage's {}",
                    p.fraction, prev.fraction
                )));
            }
        }
    }
    let partial: Vec<f64> = plans.iter().map(|p| p.fraction).filter(|&f| f < 1.0).collect();
    if partial.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Config("all partial-data stages must use the same fraction".into()));
    }
    Ok(())
}

/// Inputs of a curriculum run.
#[derive(Clone, Debug)]
pub struct Pipeline<'a> {
    pub arch: &'a ArchConfig,
    pub plans: &'a [StagePlan],
    pub train: &'a Dataset,
    pub val: Option<&'a Dataset>,
    pub config: &'a TrainConfig,
    pub swa: SwaConfig,
    pub seed: u64,
    /// Compare the last partial-data stage with the final model on that data.
    pub probe_forgetting: bool,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub stages: Vec<StageOutcome>,
    /// Averaged weights with recomputed batch-norm statistics.
    pub swa_model: Option<ModelState>,
    /// `swa_model` if averaging ran, else the last stage's weights.
    pub final_model: ModelState,
    pub log: RunLog,
    /// Samples used by the partial-data stages.
    pub subset: Manifest,
    pub forgetting: Option<ForgettingReport>,
    pub val_report: Option<EvalReport>,
}

impl Pipeline<'_> {
    fn swa_stage(&self) -> Option<u8> {
        self.swa
            .enabled
            .then(|| self.swa.stage.unwrap_or(self.plans.last().map_or(1, |p| p.stage)))
    }

    fn validate(&self) -> Result<()> {
        validate_plans(self.plans)?;
        self.config.validate()?;
        if self.swa.frequency == 0 {
            return Err(Error::Config("swa.frequency must be >= 1".into()));
        }
        if let Some(s) = self.swa_stage() {
            if s == 0 || s as usize > self.plans.len() {
                return Err(Error::Config(format!("swa.stage {s} does not exist")));
            }
        }
        Ok(())
    }

    /// The partial-data subset and the dataset each stage trains on.
    pub fn stage_data(&self) -> Result<(Manifest, Vec<Dataset>)> {
        let fraction = self.plans.iter().map(|p| p.fraction).fold(1.0, f64::min);
        let (subset, _) = split_manifest(self.train.manifest(), fraction, self.seed ^ SPLIT_SALT)?;
        let sub_data = self.train.restrict(&subset)?;
        let per_stage = self
            .plans
            .iter()
            .map(|p| if p.fraction < 1.0 { sub_data.clone() } else { self.train.clone() })
            .collect();
        Ok((subset, per_stage))
    }

    pub fn run(&self) -> Result<PipelineOutcome> {
        self.resume(Vec::new())
    }

    /// Continue after `completed`, the outcomes of the first stages of an
    /// identical plan (used to share early stages between runs).
    pub fn resume(&self, completed: Vec<StageOutcome>) -> Result<PipelineOutcome> {
        self.validate()?;
        if completed.len() > self.plans.len() {
            return Err(Error::Config("more completed stages than planned".into()));
        }
        for (c, p) in completed.iter().zip(self.plans) {
            if c.plan != *p {
                return Err(Error::Config(format!("completed stage {} does not match its plan", p.stage)));
            }
        }
        let swa_stage = self.swa_stage();
        let (subset, per_stage) = self.stage_data()?;
        let mut stages = completed;
        if let Some(s) = swa_stage {
            if (s as usize) <= stages.len() && stages[s as usize - 1].checkpoints.is_empty() {
                return Err(Error::Config(format!("completed stage {s} carries no snapshots to average")));
            }
        }
        let mut current = match stages.last() {
            Some(last) => last.model.clone(),
            None => build_model(self.arch, self.seed)?,
        };
        for (i, plan) in self.plans.iter().enumerate().skip(stages.len()) {
            let snap = (swa_stage == Some(plan.stage)).then_some(self.swa.frequency);
            let out = run_stage(&current, plan, &per_stage[i], self.config, self.seed, self.val, snap)?;
            current = out.model.clone();
            stages.push(out);
        }

        let swa_model = match swa_stage {
            Some(s) => {
                let idx = s as usize - 1;
                let avg = average_weights(&stages[idx].checkpoints)?;
                let batches = eval_batches(&per_stage[idx], self.plans[idx].resolution, self.config.batch_size)?;
                Some(recompute_bn_stats(&avg, batches)?)
            }
            None => None,
        };
        let final_model = swa_model.clone().unwrap_or_else(|| current.clone());

        let mut log = RunLog::default();
        for s in &stages {
            log.extend(s.log.clone());
        }
        let forgetting = match stages.iter().rposition(|s| s.plan.fraction < 1.0) {
            Some(i) if self.probe_forgetting && i + 1 < stages.len() => Some(forgetting_probe(
                &stages[i].model,
                &final_model,
                &per_stage[i],
                self.config.eval_resolution,
                self.config.batch_size,
            )?),
            _ => None,
        };
        let val_report = match self.val {
            Some(v) => match evaluate_model(&final_model, v, self.config.eval_resolution, self.config.batch_size) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(PipelineOutcome {
            stages,
            swa_model,
            final_model,
            log,
            subset,
            forgetting,
            val_report,
        })
    }
}

/// Run every stage from a fresh initialisation.
pub fn run_pipeline(p: &Pipeline<'_>) -> Result<PipelineOutcome> {
    p.run()
}

/// Deterministic eval-transformed batches of `data` at resolution `r`.
pub fn eval_batches(data: &Dataset, r: usize, batch_size: usize) -> Result<Vec<Tensor>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    idx.chunks(batch_size.max(1))
        .map(|chunk| {
            let imgs = chunk
                .iter()
                .map(|&i| resize_eval(data.image(i), r))
                .collect::<Result<Vec<Image>>>()?;
            batch_tensor(&imgs.iter().collect::<Vec<_>>())
        })
        .collect()
}
