use super::model::{ModelState, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Graph, RunningStats, Tensor, Var};

/// Elementwise mean of learnable parameters across checkpoints.
///
/// Values are summed sequentially in checkpoint order and divided by `K` once.
/// Batch-norm statistics of the result are copied from the first checkpoint
/// and flagged stale; see [`recompute_bn_stats`].
pub fn average_weights(checkpoints: &[ModelState]) -> Result<ModelState> {
    let Some(first) = checkpoints.first() else {
        return Err(Error::invalid("average_weights needs at least one checkpoint"));
    };
    let fp = first.fingerprint();
    if let Some(i) = checkpoints.iter().position(|m| m.fingerprint() != fp) {
        return Err(Error::IncompatibleArchitecture(format!(
            "checkpoint {i} has a different architecture than checkpoint 0"
        )));
    }
    let k = checkpoints.len() as f64;
    let mut avg = first.clone();
    for ckpt in &checkpoints[1..] {
        for (acc, (_, t)) in avg.params_mut().zip(ckpt.params()) {
            for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += v;
            }
        }
    }
    for acc in avg.params_mut() {
        for a in acc.data_mut() {
            *a /= k;
        }
    }
    avg.set_step(checkpoints.iter().map(ModelState::step).max().unwrap_or(0));
    avg.set_bn_stale(true);
    Ok(avg)
}

/// Replace running statistics with the pooled batch moments of one
/// train-mode pass over `batches`. Parameters are not touched.
pub fn recompute_bn_stats<I>(model: &ModelState, batches: I) -> Result<ModelState>
where
    I: IntoIterator<Item = Tensor>,
{
    let layers = model.running_stats().len();
    // per layer: (Σ count·mean, Σ count·(var + mean²), Σ count)
    let mut sums: Vec<(Vec<f64>, Vec<f64>, usize)> = model
        .running_stats()
        .iter()
        .map(|(_, s)| (vec![0.0; s.mean.len()], vec![0.0; s.mean.len()], 0))
        .collect();
    let mut seen = 0usize;
    for batch in batches {
        let mut g = Graph::new();
        let params: Vec<Var> = model.params().iter().map(|(_, t)| g.constant(t.clone())).collect();
        let x = g.constant(batch);
        let (_, stats) = model.forward_with(&mut g, &params, x, Mode::Train)?;
        debug_assert_eq!(stats.len(), layers);
        for ((sm, sq, cnt), s) in sums.iter_mut().zip(&stats) {
            let c = s.count as f64;
            for ch in 0..s.mean.len() {
                sm[ch] += c * s.mean[ch];
                sq[ch] += c * (s.var[ch] + s.mean[ch] * s.mean[ch]);
            }
            *cnt += s.count;
        }
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::invalid("recompute_bn_stats needs at least one batch"));
    }
    let mut out = model.clone();
    for ((_, run), (sm, sq, cnt)) in out.running_stats_mut().iter_mut().zip(sums) {
        let n = cnt as f64;
        let mean: Vec<f64> = sm.iter().map(|s| s / n).collect();
        let var = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0)).collect();
        *run = RunningStats { mean, var };
    }
    out.set_bn_stale(false);
    Ok(out)
}
