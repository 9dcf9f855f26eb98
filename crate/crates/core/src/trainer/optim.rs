use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("optimizer.{name} = {b} must be in [0, 1)")));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config(format!("optimizer.eps = {} must be > 0", self.eps)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "optimizer.weight_decay = {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, config: AdamWConfig) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
            .unzip();
        OptimState { config, t: 0, m, v }
    }
}

/// One AdamW update. Weight decay is applied to the weights first
/// (`w ← w − η·wd·w`), then the bias-corrected Adam step.
///
/// `lr = 0` is accepted and leaves the weights untouched while still
/// advancing the moments.
pub fn adamw_step(params: &mut [&mut Tensor], grads: &[Tensor], opt: &mut OptimState, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be >= 0, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != opt.m.len() {
        return Err(Error::invalid(format!(
            "{} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || opt.m[i].len() != p.len() {
            return Err(Error::invalid(format!(
                "parameter {i}: shape {:?}, gradient {:?}, moments {}",
                p.shape(),
                g.shape(),
                opt.m[i].len()
            )));
        }
    }
    let c = opt.config;
    opt.t += 1;
    let bc1 = 1.0 - c.beta1.powi(opt.t as i32);
    let bc2 = 1.0 - c.beta2.powi(opt.t as i32);
    let decay = 1.0 - lr * c.weight_decay;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(opt.m.iter_mut().zip(opt.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            if lr == 0.0 {
                continue;
            }
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w = *w * decay - lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
    Ok(())
}
