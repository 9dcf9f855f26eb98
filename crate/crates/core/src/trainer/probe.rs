use serde::{Deserialize, Serialize};

use super::eval::evaluate_model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::micronet::ModelState;

/// Scores of two checkpoints on the same held-in data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub before: EvalReport,
    pub after: EvalReport,
    /// `after − before` final score; negative means the later model forgot.
    pub delta: f64,
}

pub fn forgetting_probe(
    before: &ModelState,
    after: &ModelState,
    held_in: &Dataset,
    r: usize,
    batch_size: usize,
) -> Result<ForgettingReport> {
    if before.fingerprint() != after.fingerprint() {
        return Err(Error::IncompatibleArchitecture(
            "forgetting probe compares checkpoints of different architectures".into(),
        ));
    }
    let b = evaluate_model(before, held_in, r, batch_size)?;
    let a = evaluate_model(after, held_in, r, batch_size)?;
    Ok(ForgettingReport {
        before: b,
        after: a,
        delta: a.final_score - b.final_score,
    })
}
