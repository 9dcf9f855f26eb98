//! The curriculum engine: AdamW, cosine learning-rate schedule, per-stage
//! training, the multi-stage pipeline with weight averaging, and a probe for
//! forgetting of earlier data.

mod eval;
mod optim;
mod pipeline;
mod probe;
mod runlog;
mod schedule;
mod stage;

pub use eval::{evaluate_model, predict_dataset};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use pipeline::{
    eval_batches, holdout_split, run_pipeline, validate_plans, Pipeline, PipelineOutcome, SwaConfig,
};
pub use probe::{forgetting_probe, ForgettingReport};
pub use runlog::{EpochRecord, RunLog};
pub use schedule::{cosine_lr, LrSchedule};
pub use stage::{run_stage, InitSource, StageOutcome, StagePlan, TrainConfig};
