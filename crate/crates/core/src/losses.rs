//! Training objective: mean absolute error plus a pairwise hinge ranking term.
//!
//! ```text
//! L      = L_mae + λ · L_rank
//! L_rank = 1/n² Σ_i Σ_j max(0, |y_i − y_j| − e(y_i, y_j) · (ŷ_i − ŷ_j))
//! e      = +1 if y_i ≥ y_j else −1
//! ```
//!
//! Pairs are formed within one mini-batch, diagonal terms included.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the ranking term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("loss.lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

fn check_shapes(graph: &Graph, pred: Var, target: &Tensor) -> Result<usize> {
    let shape = graph.shape(pred);
    if shape != target.shape() {
        return Err(Error::invalid(format!(
            "prediction shape {shape:?} does not match target shape {:?}",
            target.shape()
        )));
    }
    if shape.len() != 2 || shape[1] != 1 {
        return Err(Error::invalid(format!("scores must be [N, 1], got {shape:?}")));
    }
    Ok(shape[0])
}

/// `(1/N) Σ |ŷ_i − y_i|`.
pub fn mae_loss(graph: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    check_shapes(graph, pred, target)?;
    let y = graph.constant(target.clone());
    let diff = graph.sub(pred, y)?;
    let abs = graph.abs(diff);
    Ok(graph.mean(abs))
}

/// Pairwise hinge ranking loss over all ordered pairs of the batch.
pub fn rank_loss(graph: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    let n = check_shapes(graph, pred, target)?;
    let y = target.data();
    let mut gap = Vec::with_capacity(n * n);
    let mut sign = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            gap.push((y[i] - y[j]).abs());
            sign.push(if y[i] >= y[j] { 1.0 } else { -1.0 });
        }
    }
    let gap = graph.constant(Tensor::new(vec![n, n], gap)?);
    let sign = graph.constant(Tensor::new(vec![n, n], sign)?);
    let diffs = graph.pairwise_diff(pred)?;
    let directed = graph.mul(sign, diffs)?;
    let margin = graph.sub(gap, directed)?;
    let hinge = graph.relu(margin);
    Ok(graph.mean(hinge))
}

/// `mae_loss + λ · rank_loss`.
pub fn l1_rank_loss(graph: &mut Graph, pred: Var, target: &Tensor, cfg: &LossConfig) -> Result<Var> {
    cfg.validate().map_err(|e| Error::invalid(e.to_string()))?;
    let mae = mae_loss(graph, pred, target)?;
    let rank = rank_loss(graph, pred, target)?;
    let weighted = graph.scale(rank, cfg.lambda);
    graph.add(mae, weighted)
}

/// Evaluate the combined loss on plain values.
pub fn l1_rank_loss_value(pred: &[f64], target: &[f64], cfg: &LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(Tensor::column(pred)?);
    let loss = l1_rank_loss(&mut g, p, &Tensor::column(target)?, cfg)?;
    g.value(loss).item()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(f: fn(&mut Graph, Var, &Tensor) -> Result<Var>, pred: &[f64], target: &[f64]) -> f64 {
        let mut g = Graph::new();
        let p = g.constant(Tensor::column(pred).unwrap());
        let out = f(&mut g, p, &Tensor::column(target).unwrap()).unwrap();
        g.value(out).item().unwrap()
    }

    #[test]
    fn mae_worked_examples() {
        assert_eq!(value(mae_loss, &[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_eq!(value(mae_loss, &[0.5, 0.5], &[0.0, 1.0]), 0.5);
        let c = 3.25;
        assert_eq!(
            value(mae_loss, &[0.5 + c, 0.5 + c], &[0.0 + c, 1.0 + c]),
            value(mae_loss, &[0.5, 0.5], &[0.0, 1.0])
        );
    }

    #[test]
    fn rank_worked_examples() {
        assert_eq!(value(rank_loss, &[0.4], &[0.9]), 0.0);
        assert_eq!(value(rank_loss, &[0.5, 0.5], &[0.0, 1.0]), 0.5);
        assert_eq!(value(rank_loss, &[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(value(rank_loss, &[0.1, 0.8, 0.4], &[0.1, 0.8, 0.4]), 0.0);
    }

    #[test]
    fn combined_worked_examples() {
        let cfg = LossConfig { lambda: 1.0 };
        assert_eq!(l1_rank_loss_value(&[0.5, 0.5], &[0.0, 1.0], &cfg).unwrap(), 1.0);
        let zero = LossConfig { lambda: 0.0 };
        assert_eq!(
            l1_rank_loss_value(&[0.2, 0.9, 0.5], &[0.3, 0.1, 0.6], &zero).unwrap(),
            value(mae_loss, &[0.2, 0.9, 0.5], &[0.3, 0.1, 0.6])
        );
        for lambda in [0.0, 0.5, 3.0] {
            let cfg = LossConfig { lambda };
            assert_eq!(l1_rank_loss_value(&[0.2, 0.9], &[0.2, 0.9], &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::column(&[0.1, 0.2]).unwrap());
        let err = mae_loss(&mut g, p, &Tensor::column(&[0.1, 0.2, 0.3]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(rank_loss(&mut g, p, &Tensor::column(&[0.1]).unwrap()).is_err());
    }

    #[test]
    fn negative_lambda_is_rejected() {
        assert!(LossConfig { lambda: -0.1 }.validate().is_err());
    }
}
