//! Compare backward() with central differences for a few building blocks.

use mspt::tensor::{grad_check, Activation, BatchNormMode, Graph, Tensor, Var};

fn ramp(shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i * 7919 % 97) as f64 / 97.0 - 0.5) * scale).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn main() -> mspt::Result<()> {
    let w = ramp(&[4, 3, 3, 3], 1.0);
    let gamma = Tensor::full(&[4], 1.3);
    let beta = Tensor::full(&[4], 0.1);
    let x = ramp(&[2, 3, 6, 6], 2.0);

    let conv_bn = |g: &mut Graph, x: Var| {
        let w = g.constant(w.clone());
        let y = g.conv2d(x, w, None, 2, 1, 1)?;
        let (gm, bt) = (g.constant(gamma.clone()), g.constant(beta.clone()));
        let (y, _) = g.batch_norm(y, gm, bt, BatchNormMode::Train, 1e-5)?;
        let y = g.activation(Activation::Sigmoid, y);
        let sq = g.mul(y, y)?;
        Ok(g.mean(sq))
    };
    let pool_linear = |g: &mut Graph, x: Var| {
        let p = g.global_avg_pool(x)?;
        let p = g.flatten(p)?;
        let w = g.constant(ramp(&[5, 3], 1.0));
        let y = g.linear(p, w, None)?;
        let y = g.activation(Activation::Sigmoid, y);
        Ok(g.sum(y))
    };

    for report in [
        grad_check("conv2d → batch_norm → sigmoid", conv_bn, &x, 1e-5, 1e-6)?,
        grad_check("avg_pool → linear → sigmoid", pool_linear, &x, 1e-5, 1e-6)?,
    ] {
        println!(
            "{:<32} {} inputs, max relative error {:.2e} ({})",
            report.op,
            report.analytic.len(),
            report.max_relative_error,
            if report.passed() { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
