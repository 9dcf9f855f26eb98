use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub op: String,
    pub max_relative_error: f64,
    pub errors: Vec<f64>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Check the gradient of a scalar-valued graph with respect to one input.
///
/// `builder` receives a fresh graph and the leaf holding `point` and must
/// return a scalar node. Each element is perturbed by `±h` and the central
/// difference `(f(x+h) - f(x-h)) / 2h` is compared with backward's result.
pub fn grad_check<F>(op: &str, builder: F, point: &Tensor, h: f64, tol: f64) -> Result<GradReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::invalid(format!("grad_check step must be > 0, got {h}")));
    }
    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(t);
        let y = builder(&mut g, x)?;
        g.value(y).item()
    };

    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let y = builder(&mut g, x)?;
    g.backward(y)?;
    let analytic = g
        .grad(x)
        .map(Tensor::into_data)
        .unwrap_or_else(|| vec![0.0; point.len()]);

    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }

    let errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .collect();
    let max_relative_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(GradReport {
        op: op.to_string(),
        max_relative_error,
        errors,
        analytic,
        numeric,
        tolerance: tol,
    })
}
