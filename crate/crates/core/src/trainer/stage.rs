use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_model;
use super::optim::{adamw_step, AdamWConfig, OptimState};
use super::runlog::{EpochRecord, RunLog};
use super::schedule::LrSchedule;
use crate::data::{augment, batch_tensor, stream_rng, AugmentConfig, Dataset, Image};
use crate::error::{Error, Result};
use crate::losses::{l1_rank_loss, LossConfig};
use crate::metrics::EvalReport;
use crate::micronet::{ModelState, Mode, BN_MOMENTUM, MIN_RESOLUTION};
use crate::tensor::{Graph, Tensor};

const PURPOSE_SHUFFLE: u64 = 2;
const PURPOSE_AUGMENT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    Fresh,
    Previous,
}

/// One curriculum stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    pub resolution: usize,
    /// Share of the training set this stage iterates over.
    pub fraction: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Defaults to fresh for stage 1 and the previous stage otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSource>,
}

impl StagePlan {
    pub fn new(stage: u8, resolution: usize, fraction: f64, lr: f64, epochs: usize) -> Self {
        StagePlan {
            stage,
            resolution,
            fraction,
            lr,
            epochs,
            init: None,
        }
    }

    /// 48 px on 90 % → 64 px on 90 % → 64 px on everything.
    pub fn desk() -> [StagePlan; 3] {
        [
            StagePlan::new(1, 48, 0.9, 1e-3, 30),
            StagePlan::new(2, 64, 0.9, 1e-4, 10),
            StagePlan::new(3, 64, 1.0, 1e-4, 10),
        ]
    }

    /// The full-resolution schedule the method was published with.
    pub fn full_scale() -> [StagePlan; 3] {
        [
            StagePlan::new(1, 512, 0.9, 1e-3, 50),
            StagePlan::new(2, 640, 0.9, 1e-4, 20),
            StagePlan::new(3, 640, 1.0, 1e-4, 20),
        ]
    }

    pub fn init_source(&self) -> InitSource {
        self.init.unwrap_or(if self.stage <= 1 {
            InitSource::Fresh
        } else {
            InitSource::Previous
        })
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stage.saturating_sub(1);
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "stages[{s}].resolution = {} is below {MIN_RESOLUTION}",
                self.resolution
            )));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("stages[{s}].fraction = {} must be in (0, 1]", self.fraction)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("stages[{s}].lr = {} must be >= 0", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config(format!("stages[{s}].epochs must be >= 1")));
        }
        Ok(())
    }
}

/// Everything about a training step that is not stage-specific.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub augment: AugmentConfig,
    pub optimizer: AdamWConfig,
    pub schedule: LrSchedule,
    pub loss: LossConfig,
    pub bn_momentum: f64,
    /// Resolution for validation and the forgetting probe.
    pub eval_resolution: usize,
    /// Return each stage's best-validation weights instead of its last ones.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            augment: AugmentConfig::default(),
            optimizer: AdamWConfig::default(),
            schedule: LrSchedule::default(),
            loss: LossConfig::default(),
            bn_momentum: BN_MOMENTUM,
            eval_resolution: 64,
            select_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::Config(format!("bn_momentum = {} must be in (0, 1]", self.bn_momentum)));
        }
        if self.eval_resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "eval.resolution = {} is below {MIN_RESOLUTION}",
                self.eval_resolution
            )));
        }
        self.augment.validate()?;
        self.optimizer.validate()?;
        self.schedule.validate()?;
        self.loss.validate()
    }
}

/// What one stage produced.
#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub plan: StagePlan,
    /// Weights handed to the next stage.
    pub model: ModelState,
    pub log: RunLog,
    /// End-of-epoch snapshots, when collection was requested.
    pub checkpoints: Vec<ModelState>,
    /// Digest of the parameters used by the first forward pass.
    pub first_batch_digest: [u8; 32],
    /// Manifest paths of every sample that went through a training step.
    pub touched: BTreeSet<String>,
}

fn shuffle_order(n: usize, seed: u64, stage: u8, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, PURPOSE_SHUFFLE, ((stage as u64) << 32) | epoch as u64));
    order
}

fn augment_batch(data: &Dataset, idx: &[usize], r: usize, cfg: &AugmentConfig, seed: u64, stage: u8, epoch: usize) -> Result<Tensor> {
    let purpose = PURPOSE_AUGMENT | ((stage as u64) << 8) | ((epoch as u64) << 16);
    let imgs = idx
        .iter()
        .map(|&i| augment(data.image(i), r, cfg, &mut stream_rng(seed, purpose, i as u64)))
        .collect::<Result<Vec<Image>>>()?;
    let refs: Vec<&Image> = imgs.iter().collect();
    batch_tensor(&refs)
}

fn defined(r: Result<EvalReport>) -> Result<Option<EvalReport>> {
    match r {
        Ok(rep) => Ok(Some(rep)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Train `init` on `data` for one stage.
///
/// Each epoch shuffles with a stream derived from `(seed, stage, epoch)`,
/// augments every sample from its own `(seed, stage, epoch, index)` stream and
/// steps AdamW with the scheduled learning rate. The final partial batch is
/// kept. With `snapshot_every = Some(k)` a copy of the weights is kept after
/// every k-th epoch.
pub fn run_stage(
    init: &ModelState,
    plan: &StagePlan,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    val: Option<&Dataset>,
    snapshot_every: Option<usize>,
) -> Result<StageOutcome> {
    plan.validate()?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid(format!("stage {} has no training samples", plan.stage)));
    }
    if snapshot_every == Some(0) {
        return Err(Error::invalid("snapshot interval must be >= 1"));
    }
    let mut model = init.clone();
    let mut opt = OptimState::new(model.params().iter().map(|(_, t)| t), cfg.optimizer);
    let mut log = RunLog::default();
    let mut checkpoints = Vec::new();
    let mut touched = BTreeSet::new();
    let mut first_batch_digest = None;
    let mut best: Option<(f64, ModelState)> = None;
    let bs = cfg.batch_size;
    let n_batches = data.len().div_ceil(bs);

    for epoch in 0..plan.epochs {
        let started = Instant::now();
        let order = shuffle_order(data.len(), seed, plan.stage, epoch);
        let mut loss_sum = 0.0;
        let epoch_lr = cfg.schedule.lr_at(epoch as f64, plan.epochs, plan.lr);
        for (b, chunk) in order.chunks(bs).enumerate() {
            let x = augment_batch(data, chunk, plan.resolution, &cfg.augment, seed, plan.stage, epoch)?;
            let y = Tensor::column(&chunk.iter().map(|&i| data.sample(i).mos).collect::<Vec<_>>())?;
            let progress = epoch as f64 + b as f64 / n_batches as f64;
            let lr = cfg.schedule.lr_at(progress, plan.epochs, plan.lr);

            first_batch_digest.get_or_insert_with(|| model.param_digest());
            let mut g = Graph::new();
            let xi = g.constant(x);
            let fwd = model.forward(&mut g, xi, Mode::Train)?;
            let loss = l1_rank_loss(&mut g, fwd.output, &y, &cfg.loss)?;
            let lv = g.value(loss).item()?;
            if !lv.is_finite() {
                return Err(Error::Divergence {
                    stage: plan.stage as usize,
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss: lv,
                });
            }
            g.backward(loss)?;
            let grads: Vec<Tensor> = fwd
                .params
                .iter()
                .zip(model.params())
                .map(|(&v, (_, p))| g.grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            drop(g);
            let mut ps: Vec<&mut Tensor> = model.params_mut().collect();
            adamw_step(&mut ps, &grads, &mut opt, lr)?;
            model.absorb_batch_stats(&fwd.batch_stats, cfg.bn_momentum)?;
            model.set_step(model.step() + 1);

            loss_sum += lv * chunk.len() as f64;
            touched.extend(chunk.iter().map(|&i| data.sample(i).path.clone()));
        }

        let report = match val {
            Some(v) => defined(evaluate_model(&model, v, cfg.eval_resolution, bs))?,
            None => None,
        };
        if cfg.select_best {
            if let Some(r) = report {
                if best.as_ref().is_none_or(|(s, _)| r.final_score > *s) {
                    best = Some((r.final_score, model.clone()));
                }
            }
        }
        if let Some(k) = snapshot_every {
            if (epoch + 1) % k == 0 {
                checkpoints.push(model.clone());
            }
        }
        log.push(EpochRecord {
            stage: plan.stage,
            epoch: epoch + 1,
            loss: loss_sum / data.len() as f64,
            val_srcc: report.map(|r| r.srcc),
            val_plcc: report.map(|r| r.plcc),
            val_score: report.map(|r| r.final_score),
            lr: epoch_lr,
            sec: started.elapsed().as_secs_f64(),
        });
    }
    if let Some((_, b)) = best {
        model = b;
    }
    Ok(StageOutcome {
        plan: *plan,
        model,
        log,
        checkpoints,
        first_batch_digest: first_batch_digest.expect("at least one batch ran"),
        touched,
    })
}
