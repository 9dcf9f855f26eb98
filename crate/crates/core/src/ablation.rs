//! The {two-stage, three-stage} × {weight averaging on, off} grid.
//!
//! Both strategies start from the same stage-1 run (their first stages are
//! identical), and each strategy's averaging on/off cells come from one
//! trajectory: the snapshots collected during the last stage do not change
//! training, so "off" is that stage's final weights and "on" is their average.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::micronet::{build_model, ArchConfig};
use crate::trainer::{evaluate_model, run_stage, Pipeline, PipelineOutcome, StagePlan, SwaConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TwoStage,
    ThreeStage,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::TwoStage => "two_stage",
            Strategy::ThreeStage => "three_stage",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub strategy: Strategy,
    pub swa: bool,
    pub srcc: f64,
    pub plcc: f64,
    pub score: f64,
    /// Score minus the two-stage, no-averaging row of the same seed.
    pub improvement: f64,
    pub d_srcc: f64,
    pub d_plcc: f64,
}

/// Stage 1 followed by one fine-tune at the last stage's resolution,
/// learning rate and epoch count on all training data.
pub fn two_stage_plans(three: &[StagePlan]) -> Result<[StagePlan; 2]> {
    let [s1, .., last] = three else {
        return Err(Error::Config("the ablation needs at least two configured stages".into()));
    };
    Ok([*s1, StagePlan::new(2, last.resolution, 1.0, last.lr, last.epochs)])
}

pub struct Ablation<'a> {
    pub arch: &'a ArchConfig,
    /// The multi-stage schedule; its first stage is shared with the two-stage arm.
    pub plans: &'a [StagePlan],
    pub train: &'a Dataset,
    /// Data every cell is scored on.
    pub test: &'a Dataset,
    pub config: &'a TrainConfig,
    pub swa_frequency: usize,
}

impl Ablation<'_> {
    fn pipeline<'b>(&'b self, plans: &'b [StagePlan], swa: SwaConfig, seed: u64) -> Pipeline<'b> {
        Pipeline {
            arch: self.arch,
            plans,
            train: self.train,
            val: None,
            config: self.config,
            swa,
            seed,
            probe_forgetting: false,
        }
    }

    /// Four rows for one seed, in the order
    /// (two, off), (two, on), (three, off), (three, on).
    pub fn run(&self, seed: u64) -> Result<Vec<AblationRow>> {
        Ok(self.run_detailed(seed)?.rows)
    }

    /// [`Ablation::run`] plus both pipeline outcomes and their wall times.
    pub fn run_detailed(&self, seed: u64) -> Result<AblationRun> {
        let two = two_stage_plans(self.plans)?;
        let swa = SwaConfig {
            enabled: true,
            stage: None,
            frequency: self.swa_frequency,
        };
        let (_, per_stage) = self.pipeline(self.plans, swa, seed).stage_data()?;
        let started = Instant::now();
        let fresh = build_model(self.arch, seed)?;
        let stage1 = run_stage(&fresh, &self.plans[0], &per_stage[0], self.config, seed, None, None)?;
        let stage1_secs = started.elapsed().as_secs_f64();

        let r = self.config.eval_resolution;
        let bs = self.config.batch_size;
        let mut cells: Vec<(Strategy, bool, EvalReport)> = Vec::with_capacity(4);
        let mut outcomes = Vec::with_capacity(2);
        for (strategy, plans) in [(Strategy::TwoStage, &two[..]), (Strategy::ThreeStage, self.plans)] {
            let started = Instant::now();
            let out = self.pipeline(plans, swa, seed).resume(vec![stage1.clone()])?;
            let secs = stage1_secs + started.elapsed().as_secs_f64();
            let last = &out.stages.last().expect("at least one stage").model;
            cells.push((strategy, false, evaluate_model(last, self.test, r, bs)?));
            cells.push((strategy, true, evaluate_model(&out.final_model, self.test, r, bs)?));
            outcomes.push((out, secs));
        }
        let base = cells[0].2;
        let rows = cells
            .into_iter()
            .map(|(strategy, swa, e)| AblationRow {
                seed,
                strategy,
                swa,
                srcc: e.srcc,
                plcc: e.plcc,
                score: e.final_score,
                improvement: e.final_score - base.final_score,
                d_srcc: e.srcc - base.srcc,
                d_plcc: e.plcc - base.plcc,
            })
            .collect();
        let (three_stage, three_stage_secs) = outcomes.pop().expect("two arms");
        let (two_stage, two_stage_secs) = outcomes.pop().expect("two arms");
        Ok(AblationRun {
            rows,
            two_stage,
            three_stage,
            two_stage_secs,
            three_stage_secs,
        })
    }
}

/// Everything one seed of the grid produced.
#[derive(Clone, Debug)]
pub struct AblationRun {
    pub rows: Vec<AblationRow>,
    pub two_stage: PipelineOutcome,
    pub three_stage: PipelineOutcome,
    /// Wall time of each arm, counting the shared first stage in both.
    pub two_stage_secs: f64,
    pub three_stage_secs: f64,
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("seed,strategy,swa,srcc,plcc,score,improvement,d_srcc,d_plcc\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.strategy.as_str(),
            r.swa,
            r.srcc,
            r.plcc,
            r.score,
            r.improvement,
            r.d_srcc,
            r.d_plcc
        ));
    }
    s
}

/// Write `ablation.csv` and `ablation.json` into `dir`.
pub fn write_rows(rows: &[AblationRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("ablation.csv");
    fs::write(&csv, rows_to_csv(rows)).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("ablation.json");
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}
