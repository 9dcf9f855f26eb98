use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::arch::{ArchConfig, LayerKind};
use crate::error::{Error, Result};
use crate::tensor::{Activation, BatchNormMode, BatchStats, Graph, RunningStats, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Smallest spatial side the network accepts.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Learnable parameters plus batch-norm buffers of one network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    arch: ArchConfig,
    params: Vec<(String, Tensor)>,
    running: Vec<(String, RunningStats)>,
    bn_stale: bool,
    step: u64,
}

/// Result of a graph-building forward pass.
#[derive(Debug)]
pub struct Forward {
    /// Scores, `[N, 1]`.
    pub output: Var,
    /// One leaf per parameter, in [`ModelState::params`] order.
    pub params: Vec<Var>,
    /// Batch moments of every batch-norm layer (train mode only).
    pub batch_stats: Vec<BatchStats>,
}

/// Deterministically initialise a network: He-uniform weights (bound
/// `sqrt(6 / fan_in)`), zero biases and betas, unit gammas.
pub fn build_model(arch: &ArchConfig, seed: u64) -> Result<ModelState> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    let mut running = Vec::new();
    for layer in arch.layers(MIN_RESOLUTION) {
        match layer.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                groups,
                bias,
                ..
            } => {
                let fan_in = in_channels / groups * kernel * kernel;
                let shape = vec![out_channels, in_channels / groups, kernel, kernel];
                params.push((format!("{}.weight", layer.name), he_uniform(&mut rng, shape, fan_in)));
                if bias {
                    params.push((format!("{}.bias", layer.name), Tensor::zeros(&[out_channels])));
                }
            }
            LayerKind::BatchNorm { channels } => {
                params.push((format!("{}.gamma", layer.name), Tensor::full(&[channels], 1.0)));
                params.push((format!("{}.beta", layer.name), Tensor::zeros(&[channels])));
                running.push((layer.name.clone(), RunningStats::new(channels)));
            }
            LayerKind::Linear {
                in_features,
                out_features,
            } => {
                let shape = vec![out_features, in_features];
                params.push((format!("{}.weight", layer.name), he_uniform(&mut rng, shape, in_features)));
                params.push((format!("{}.bias", layer.name), Tensor::zeros(&[out_features])));
            }
        }
    }
    Ok(ModelState {
        arch: arch.clone(),
        params,
        running,
        bn_stale: false,
        step: 0,
    })
}

fn he_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape matches")
}

impl ModelState {
    pub(crate) fn from_parts(
        arch: ArchConfig,
        params: Vec<(String, Tensor)>,
        running: Vec<(String, RunningStats)>,
        bn_stale: bool,
        step: u64,
    ) -> Self {
        ModelState {
            arch,
            params,
            running,
            bn_stale,
            step,
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.arch.fingerprint()
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn running_stats(&self) -> &[(String, RunningStats)] {
        &self.running
    }

    pub(crate) fn running_stats_mut(&mut self) -> &mut [(String, RunningStats)] {
        &mut self.running
    }

    /// True after weight averaging until statistics are recomputed.
    pub fn bn_stale(&self) -> bool {
        self.bn_stale
    }

    pub(crate) fn set_bn_stale(&mut self, stale: bool) {
        self.bn_stale = stale;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Total learnable scalars.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// SHA-256 over every learnable value in order (little-endian bytes).
    pub fn param_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (_, t) in &self.params {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Fold train-mode batch moments into the running statistics.
    pub fn absorb_batch_stats(&mut self, stats: &[BatchStats], momentum: f64) -> Result<()> {
        if stats.len() != self.running.len() {
            return Err(Error::invalid(format!(
                "expected {} batch-norm statistics, got {}",
                self.running.len(),
                stats.len()
            )));
        }
        for ((_, run), batch) in self.running.iter_mut().zip(stats) {
            run.absorb(batch, momentum);
        }
        Ok(())
    }

    /// Forward pass with every parameter registered as a trainable leaf.
    pub fn forward(&self, graph: &mut Graph, input: Var, mode: Mode) -> Result<Forward> {
        let params: Vec<Var> = self.params.iter().map(|(_, t)| graph.leaf(t.clone())).collect();
        let (output, batch_stats) = self.forward_with(graph, &params, input, mode)?;
        Ok(Forward {
            output,
            params,
            batch_stats,
        })
    }

    /// Forward pass using caller-supplied parameter nodes (one per entry of
    /// [`ModelState::params`]).
    pub fn forward_with(
        &self,
        graph: &mut Graph,
        params: &[Var],
        input: Var,
        mode: Mode,
    ) -> Result<(Var, Vec<BatchStats>)> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter nodes, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let shape = graph.shape(input).to_vec();
        let [_, c, h, w] = shape[..] else {
            return Err(Error::invalid(format!("network input must be NCHW, got {shape:?}")));
        };
        if c != self.arch.in_channels {
            return Err(Error::invalid(format!(
                "network expects {} input channels, got {c}",
                self.arch.in_channels
            )));
        }
        if h < MIN_RESOLUTION || w < MIN_RESOLUTION {
            return Err(Error::invalid(format!(
                "network input must be at least {MIN_RESOLUTION}x{MIN_RESOLUTION}, got {h}x{w}"
            )));
        }
        if mode == Mode::Eval && self.bn_stale {
            return Err(Error::State(
                "batch-norm statistics are stale; recompute them before eval".into(),
            ));
        }

        let mut net = Builder {
            graph,
            params,
            next_param: 0,
            model: self,
            next_bn: 0,
            mode,
            stats: Vec::new(),
        };
        let arch = &self.arch;

        let mut x = net.conv(input, 2, 1, 1)?;
        x = net.bn(x)?;
        x = net.graph.activation(arch.stem_activation, x);

        for b in &arch.blocks {
            let block_in = x;
            let hidden = b.hidden_channels();
            let mut y = x;
            if b.expansion != 1 {
                y = net.conv(y, 1, 0, 1)?;
                y = net.bn(y)?;
                y = net.graph.activation(b.activation, y);
            }
            y = net.conv(y, b.stride, b.kernel / 2, hidden)?;
            y = net.bn(y)?;
            y = net.graph.activation(b.activation, y);
            if b.use_se {
                let pooled = net.graph.global_avg_pool(y)?;
                let s = net.graph.flatten(pooled)?;
                let s = net.linear(s)?;
                let s = net.graph.activation(Activation::Relu, s);
                let s = net.linear(s)?;
                let gate = net.graph.activation(Activation::HardSigmoid, s);
                y = net.graph.channel_scale(y, gate)?;
            }
            y = net.conv(y, 1, 0, 1)?;
            y = net.bn(y)?;
            if b.has_residual() {
                y = net.graph.add(y, block_in)?;
            }
            x = y;
        }

        x = net.conv(x, 1, 0, 1)?;
        x = net.bn(x)?;
        x = net.graph.activation(arch.head_activation, x);
        let pooled = net.graph.global_avg_pool(x)?;
        let mut z = net.graph.flatten(pooled)?;
        z = net.linear(z)?;
        z = net.graph.activation(arch.head_activation, z);
        z = net.linear(z)?;
        let out = net.graph.activation(arch.output_activation, z);

        debug_assert_eq!(net.next_param, params.len());
        Ok((out, net.stats))
    }

    /// Eval-mode scores for a batch, without tracking gradients.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let params: Vec<Var> = self.params.iter().map(|(_, t)| g.constant(t.clone())).collect();
        let x = g.constant(batch.clone());
        let (out, _) = self.forward_with(&mut g, &params, x, Mode::Eval)?;
        Ok(g.value(out).data().to_vec())
    }
}

struct Builder<'a> {
    graph: &'a mut Graph,
    params: &'a [Var],
    next_param: usize,
    model: &'a ModelState,
    next_bn: usize,
    mode: Mode,
    stats: Vec<BatchStats>,
}

impl Builder<'_> {
    fn take(&mut self) -> Var {
        let v = self.params[self.next_param];
        self.next_param += 1;
        v
    }

    fn conv(&mut self, x: Var, stride: usize, padding: usize, groups: usize) -> Result<Var> {
        let w = self.take();
        self.graph.conv2d(x, w, None, stride, padding, groups)
    }

    fn bn(&mut self, x: Var) -> Result<Var> {
        let gamma = self.take();
        let beta = self.take();
        let running = &self.model.running[self.next_bn].1;
        self.next_bn += 1;
        let mode = match self.mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval(Some(running)),
        };
        let (y, stats) = self.graph.batch_norm(x, gamma, beta, mode, BN_EPS)?;
        if let Some(s) = stats {
            self.stats.push(s);
        }
        Ok(y)
    }

    fn linear(&mut self, x: Var) -> Result<Var> {
        let w = self.take();
        let b = self.take();
        self.graph.linear(x, w, Some(b))
    }
}
