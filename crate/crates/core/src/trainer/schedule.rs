use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `η_min + ½(η_max − η_min)(1 + cos(π·t/T))` for `t ∈ [0, T]`.
pub fn cosine_lr(t: f64, period: usize, eta_max: f64, eta_min: f64) -> f64 {
    debug_assert!(period >= 1);
    let t = t.clamp(0.0, period as f64);
    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (std::f64::consts::PI * t / period as f64).cos())
}

/// How the learning rate evolves within a stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Cosine annealing restarted every `period` epochs.
    CosineRestarts { period: usize, eta_min: f64 },
    /// One cosine cycle over the whole stage.
    CosineSingle { eta_min: f64 },
    Constant,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::CosineRestarts {
            period: 5,
            eta_min: 0.0,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::CosineRestarts { period, eta_min } => {
                if period == 0 {
                    return Err(Error::Config("schedule.period must be >= 1".into()));
                }
                check_min(eta_min)
            }
            LrSchedule::CosineSingle { eta_min } => check_min(eta_min),
            LrSchedule::Constant => Ok(()),
        }
    }

    /// Learning rate at fractional epoch `progress` of a stage lasting `epochs`.
    pub fn lr_at(&self, progress: f64, epochs: usize, eta_max: f64) -> f64 {
        match *self {
            LrSchedule::CosineRestarts { period, eta_min } => {
                let t = progress % period as f64;
                cosine_lr(t, period, eta_max, eta_min.min(eta_max))
            }
            LrSchedule::CosineSingle { eta_min } => cosine_lr(progress, epochs.max(1), eta_max, eta_min.min(eta_max)),
            LrSchedule::Constant => eta_max,
        }
    }
}

fn check_min(eta_min: f64) -> Result<()> {
    if !(eta_min >= 0.0 && eta_min.is_finite()) {
        return Err(Error::Config(format!("schedule.eta_min = {eta_min} must be >= 0")));
    }
    Ok(())
}
