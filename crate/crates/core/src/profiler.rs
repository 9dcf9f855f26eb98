//! Parameter and multiply-accumulate counts, single-image runtime, and the
//! efficiency limits a submission must respect.
//!
//! MACs count one multiply plus one add; FLOPs are reported as `2 × MACs`.
//! Activations, pooling and batch norm contribute no MACs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micronet::{LayerKind, ModelState, MIN_RESOLUTION};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCount {
    pub name: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub total: u64,
    pub by_layer: Vec<LayerCount>,
    /// Batch-norm running statistics, not included in `total`.
    pub buffers: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounts {
    pub resolution: usize,
    pub total: u64,
    pub by_layer: Vec<LayerCount>,
}

/// Parameters of one layer: `Cout·(Cin/g)·K²` (+`Cout` bias) for convs,
/// `Fout·Fin + Fout` for linears, `2C` for batch norm.
pub fn layer_params(kind: &LayerKind) -> u64 {
    kind.param_count() as u64
}

/// MACs of one layer given its output side.
pub fn layer_macs(kind: &LayerKind, out_side: usize) -> u64 {
    kind.macs(out_side)
}

pub fn count_params(model: &ModelState) -> ParamCounts {
    let layers = model.arch().layers(MIN_RESOLUTION);
    let by_layer: Vec<LayerCount> = layers
        .iter()
        .map(|l| LayerCount {
            name: l.name.clone(),
            count: layer_params(&l.kind),
        })
        .collect();
    ParamCounts {
        total: by_layer.iter().map(|l| l.count).sum(),
        by_layer,
        buffers: layers.iter().map(|l| l.kind.buffer_count() as u64).sum(),
    }
}

pub fn count_macs(model: &ModelState, resolution: usize) -> Result<MacCounts> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!("resolution {resolution} is below {MIN_RESOLUTION}")));
    }
    let by_layer: Vec<LayerCount> = model
        .arch()
        .layers(resolution)
        .iter()
        .map(|l| LayerCount {
            name: l.name.clone(),
            count: layer_macs(&l.kind, l.out_side),
        })
        .collect();
    Ok(MacCounts {
        resolution,
        total: by_layer.iter().map(|l| l.count).sum(),
        by_layer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub warmup: usize,
    pub repeats: usize,
}

/// Wall-clock of single-image eval-mode forward passes. Timing shares the
/// core with whatever else the process is doing.
pub fn measure_runtime(model: &ModelState, resolution: usize, warmup: usize, repeats: usize) -> Result<RuntimeStats> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!("resolution {resolution} is below {MIN_RESOLUTION}")));
    }
    let input = Tensor::full(&[1, model.arch().in_channels, resolution, resolution], 0.5);
    for _ in 0..warmup {
        std::hint::black_box(model.predict(&input)?);
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(model.predict(&input)?);
        times.push(t.elapsed().as_secs_f64());
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    Ok(RuntimeStats {
        mean_s: mean,
        std_s: var.sqrt(),
        min_s: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: times.iter().copied().fold(0.0, f64::max),
        warmup,
        repeats,
    })
}

/// Efficiency budget. Defaults: 5 M parameters, 0.25 G MACs (0.5 GFLOPs).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub params: f64,
    pub macs: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            params: 5e6,
            macs: 0.25e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub params_ok: bool,
    pub macs_ok: bool,
    pub violations: Vec<String>,
}

impl ConstraintCheck {
    pub fn passed(&self) -> bool {
        self.params_ok && self.macs_ok
    }
}

pub fn check_constraints(params: u64, macs: u64, limits: &Limits) -> ConstraintCheck {
    let params_ok = params as f64 <= limits.params;
    let macs_ok = macs as f64 <= limits.macs;
    let mut violations = Vec::new();
    if !params_ok {
        violations.push(format!("{params} parameters exceed the limit of {}", limits.params));
    }
    if !macs_ok {
        violations.push(format!("{macs} MACs exceed the limit of {}", limits.macs));
    }
    ConstraintCheck {
        params_ok,
        macs_ok,
        violations,
    }
}

/// Efficiency summary. The first four fields mirror the leaderboard columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub num_params_m: f64,
    pub macs_g: f64,
    pub flops_g: f64,
    pub runtime_s: Option<f64>,
    pub runtime: Option<RuntimeStats>,
    pub resolution: usize,
    pub num_params: u64,
    pub macs: u64,
    pub buffers: u64,
    pub params_by_layer: Vec<LayerCount>,
    pub macs_by_layer: Vec<LayerCount>,
    pub constraints: ConstraintCheck,
}

/// Counts at `resolution` and, when `timing = Some((warmup, repeats))`, runtime.
pub fn profile(model: &ModelState, resolution: usize, timing: Option<(usize, usize)>, limits: &Limits) -> Result<ProfileReport> {
    let p = count_params(model);
    let m = count_macs(model, resolution)?;
    let runtime = match timing {
        Some((w, r)) => Some(measure_runtime(model, resolution, w, r)?),
        None => None,
    };
    Ok(ProfileReport {
        num_params_m: p.total as f64 / 1e6,
        macs_g: m.total as f64 / 1e9,
        flops_g: 2.0 * m.total as f64 / 1e9,
        runtime_s: runtime.as_ref().map(|r| r.mean_s),
        runtime,
        resolution,
        num_params: p.total,
        macs: m.total,
        buffers: p.buffers,
        params_by_layer: p.by_layer,
        macs_by_layer: m.by_layer,
        constraints: check_constraints(p.total, m.total, limits),
    })
}
