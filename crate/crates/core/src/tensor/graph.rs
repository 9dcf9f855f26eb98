use serde::{Deserialize, Serialize};

use super::conv::{self, ConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
///
/// Kinks use the left-limit convention: the subgradient of `relu` at 0 is 0,
/// `hard_swish`/`hard_sigmoid` take the flat-side slope at -3 and +3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    HardSwish,
    HardSigmoid,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::HardSwish => x * relu6(x + 3.0) / 6.0,
            Activation::HardSigmoid => relu6(x + 3.0) / 6.0,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// d/dx given the input `x` and the already computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::HardSwish => {
                if x <= -3.0 {
                    0.0
                } else if x >= 3.0 {
                    1.0
                } else {
                    (2.0 * x + 3.0) / 6.0
                }
            }
            Activation::HardSigmoid => {
                if x <= -3.0 || x >= 3.0 {
                    0.0
                } else {
                    1.0 / 6.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn relu6(x: f64) -> f64 {
    x.clamp(0.0, 6.0)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    /// Fresh statistics: zero mean, unit variance.
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    /// `run <- (1 - momentum) * run + momentum * batch`.
    pub fn absorb(&mut self, batch: &BatchStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

/// Moments observed by a train-mode batch-norm call. `var` is the biased
/// (population) variance over `count` values per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize by batch moments; the caller decides what to do with them.
    Train,
    /// Normalize by stored statistics. `None` means they are not available.
    Eval(Option<&'a RunningStats>),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    GlobalAvgPool {
        input: Var,
    },
    Reshape {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ChannelScale {
        input: Var,
        scale: Var,
    },
    Abs(Var),
    Sum(Var),
    Mean(Var),
    PairwiseDiff(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    needs_grad: bool,
}

/// A dynamically built computation graph.
///
/// Nodes are appended in evaluation order, which is also a valid topological
/// order, so backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: receives a gradient on [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::resolve(self.shape(input), self.shape(weight), stride, padding, groups)?;
        if let Some(b) = bias {
            if self.shape(b) != [geom.out_channels] {
                return Err(Error::invalid(format!(
                    "conv2d bias shape {:?} does not match Cout = {}",
                    self.shape(b),
                    geom.out_channels
                )));
            }
        }
        let out = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            needs,
        ))
    }

    /// Batch normalization over `[N, C]` or `[N, C, H, W]` inputs.
    ///
    /// In train mode the returned [`BatchStats`] hold the batch moments used
    /// for normalization.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::invalid(format!("batch_norm epsilon must be > 0, got {eps}")));
        }
        let shape = self.shape(input).to_vec();
        let (n, c, plane) = match shape.as_slice() {
            [n, c] => (*n, *c, 1),
            [n, c, h, w] => (*n, *c, h * w),
            _ => {
                return Err(Error::invalid(format!(
                    "batch_norm input must be [N,C] or NCHW, got {shape:?}"
                )))
            }
        };
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(Error::invalid(format!(
                    "batch_norm {name} shape {:?} does not match channel dim {c}",
                    self.shape(v)
                )));
            }
        }
        let x = self.value(input).data();
        let count = n * plane;
        let (mean, var, stats, train) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += conv::sum(&x[(b * c + ch) * plane..][..plane]);
                    }
                    let m = s / count as f64;
                    let mut ss = 0.0;
                    for b in 0..n {
                        ss += conv::sq_dev(&x[(b * c + ch) * plane..][..plane], m);
                    }
                    mean[ch] = m;
                    var[ch] = ss / count as f64;
                }
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: var.clone(),
                    count,
                };
                (mean, var, Some(stats), true)
            }
            BatchNormMode::Eval(Some(running)) => {
                if running.mean.len() != c || running.var.len() != c {
                    return Err(Error::invalid(format!(
                        "batch_norm running stats have {} channels, input has {c}",
                        running.mean.len()
                    )));
                }
                (running.mean.clone(), running.var.clone(), None, false)
            }
            BatchNormMode::Eval(None) => {
                return Err(Error::State(
                    "batch_norm in eval mode without running statistics".into(),
                ))
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut normalized = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (x[i] - mean[ch]) * inv_std[ch];
                    normalized[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        let value = Tensor::new(shape, out)?;
        let var_out = self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                train,
            },
            needs,
        );
        Ok((var_out, stats))
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Var {
        let src = self.value(input);
        let data = src.data().iter().map(|&x| kind.apply(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Activation { input, kind }, needs)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(Activation::Relu, input)
    }

    /// `[N, C, H, W] -> [N, C, 1, 1]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let [n, c, h, w] = shape[..] else {
            return Err(Error::invalid(format!(
                "global_avg_pool input must be NCHW, got {shape:?}"
            )));
        };
        let plane = h * w;
        let x = self.value(input).data();
        let data = x.chunks_exact(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
        let value = Tensor::new(vec![n, c, 1, 1], data)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::GlobalAvgPool { input }, needs))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Reshape { input }, needs))
    }

    /// `[N, C, 1, 1] -> [N, C]` (or any `[N, ...] -> [N, prod(...)]`).
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(input, vec![n, rest])
    }

    /// `x W^T + b` for `x: [N, F_in]`, `W: [F_out, F_in]`, `b: [F_out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let (&[n, f_in], &[f_out, w_in]) = (&xs[..], &ws[..]) else {
            return Err(Error::invalid(format!(
                "linear expects input [N, F_in] and weight [F_out, F_in], got {xs:?} and {ws:?}"
            )));
        };
        if f_in != w_in {
            return Err(Error::invalid(format!(
                "linear input features {f_in} do not match weight dim 1 = {w_in}"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [f_out] {
                return Err(Error::invalid(format!(
                    "linear bias shape {:?} does not match F_out = {f_out}",
                    self.shape(b)
                )));
            }
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let mut out = vec![0.0; n * f_out];
        for i in 0..n {
            let row = &x[i * f_in..][..f_in];
            for o in 0..f_out {
                let dot: f64 = row.iter().zip(&w[o * f_in..][..f_in]).map(|(a, b)| a * b).sum();
                out[i * f_out + o] = dot + bias.map_or(0.0, |b| self.value(b).data()[o]);
            }
        }
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![n, f_out], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }, needs))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::invalid(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let src = self.value(input);
        let data = src.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Scale(input, factor), needs)
    }

    /// `x[n, c, h, w] * s[n, c]`: the squeeze-excite gate.
    pub fn channel_scale(&mut self, input: Var, scale: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ss = self.shape(scale).to_vec();
        let [n, c, h, w] = xs[..] else {
            return Err(Error::invalid(format!("channel_scale input must be NCHW, got {xs:?}")));
        };
        if ss != [n, c] {
            return Err(Error::invalid(format!(
                "channel_scale gate shape {ss:?} does not match [N, C] = [{n}, {c}]"
            )));
        }
        let plane = h * w;
        let s = self.value(scale).data();
        let data = self
            .value(input)
            .data()
            .chunks_exact(plane)
            .zip(s)
            .flat_map(|(p, &g)| p.iter().map(move |v| v * g))
            .collect();
        let value = Tensor::new(xs, data)?;
        let needs = self.needs(input) || self.needs(scale);
        Ok(self.push(value, Op::ChannelScale { input, scale }, needs))
    }

    /// Elementwise absolute value (subgradient 0 at 0).
    pub fn abs(&mut self, input: Var) -> Var {
        let src = self.value(input);
        let data = src.data().iter().map(|x| x.abs()).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Abs(input), needs)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        let needs = self.needs(input);
        self.push(Tensor::scalar(s), Op::Sum(input), needs)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let src = self.value(input).data();
        let m = src.iter().sum::<f64>() / src.len() as f64;
        let needs = self.needs(input);
        self.push(Tensor::scalar(m), Op::Mean(input), needs)
    }

    /// `[n, 1]` (or `[n]`) to `[n, n]` with `out[i, j] = x[i] - x[j]`.
    pub fn pairwise_diff(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        let n = match shape {
            [n] | [n, 1] => *n,
            _ => {
                return Err(Error::invalid(format!(
                    "pairwise_diff expects [n] or [n, 1], got {shape:?}"
                )))
            }
        };
        let x = self.value(input).data();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(x[i] - x[j]);
            }
        }
        let value = Tensor::new(vec![n, n], data)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::PairwiseDiff(input), needs))
    }

    /// Populate `∂root/∂leaf` on every tracked leaf. Gradients accumulate
    /// across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::invalid(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let node = &mut self.nodes[idx];
                    match &mut node.grad {
                        Some(acc) => acc.iter_mut().zip(&gout).for_each(|(a, g)| *a += g),
                        None => node.grad = Some(gout),
                    }
                }
                Op::Constant => {}
                _ => {
                    let contributions = self.local_grads(idx, gout);
                    for (var, g) in contributions {
                        if !self.needs(var) {
                            continue;
                        }
                        match &mut grads[var.0] {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            slot @ None => *slot = Some(g),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of one node with respect to each input.
    fn local_grads(&self, idx: usize, gout: Vec<f64>) -> Vec<(Var, Vec<f64>)> {
        let val = |v: Var| self.value(v).data();
        let mut out = Vec::with_capacity(3);
        match &self.nodes[idx].op {
            Op::Leaf | Op::Constant => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                if self.needs(*input) {
                    out.push((*input, conv::backward_input(geom, &gout, val(*weight))));
                }
                if self.needs(*weight) {
                    out.push((*weight, conv::backward_weight(geom, &gout, val(*input))));
                }
                if let Some(b) = bias {
                    if self.needs(*b) {
                        out.push((*b, conv::backward_bias(geom, &gout)));
                    }
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                train,
            } => {
                let shape = self.shape(*input);
                let (n, c) = (shape[0], shape[1]);
                let plane: usize = shape[2..].iter().product();
                let count = (n * plane) as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * plane;
                        let gp = &gout[off..off + plane];
                        dbeta[ch] += conv::sum(gp);
                        dgamma[ch] += conv::dot(gp, &normalized[off..off + plane]);
                    }
                }
                if self.needs(*input) {
                    let g = val(*gamma);
                    let mut dx = gout;
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            let k = g[ch] * inv_std[ch];
                            let dxp = &mut dx[off..off + plane];
                            if *train {
                                let mb = dbeta[ch] / count;
                                let mg = dgamma[ch] / count;
                                for (d, xh) in dxp.iter_mut().zip(&normalized[off..off + plane]) {
                                    *d = k * (*d - mb - xh * mg);
                                }
                            } else {
                                dxp.iter_mut().for_each(|d| *d *= k);
                            }
                        }
                    }
                    out.push((*input, dx));
                }
                out.push((*gamma, dgamma));
                out.push((*beta, dbeta));
            }
            Op::Activation { input, kind } => {
                let x = val(*input);
                let y = self.nodes[idx].value.data();
                let mut dx = gout;
                for ((d, &xi), &yi) in dx.iter_mut().zip(x).zip(y) {
                    *d *= kind.derivative(xi, yi);
                }
                out.push((*input, dx));
            }
            Op::GlobalAvgPool { input } => {
                let shape = self.shape(*input);
                let plane = shape[2] * shape[3];
                let inv = 1.0 / plane as f64;
                let dx = gout
                    .iter()
                    .flat_map(|&g| std::iter::repeat_n(g * inv, plane))
                    .collect();
                out.push((*input, dx));
            }
            Op::Reshape { input } => out.push((*input, gout)),
            Op::Linear { input, weight, bias } => {
                let xs = self.shape(*input);
                let (n, f_in) = (xs[0], xs[1]);
                let f_out = self.shape(*weight)[0];
                let x = val(*input);
                let w = val(*weight);
                if self.needs(*input) {
                    let mut dx = vec![0.0; n * f_in];
                    for i in 0..n {
                        for o in 0..f_out {
                            let g = gout[i * f_out + o];
                            for (d, wv) in dx[i * f_in..][..f_in].iter_mut().zip(&w[o * f_in..][..f_in]) {
                                *d += g * wv;
                            }
                        }
                    }
                    out.push((*input, dx));
                }
                if self.needs(*weight) {
                    let mut dw = vec![0.0; f_out * f_in];
                    for i in 0..n {
                        for o in 0..f_out {
                            let g = gout[i * f_out + o];
                            for (d, xv) in dw[o * f_in..][..f_in].iter_mut().zip(&x[i * f_in..][..f_in]) {
                                *d += g * xv;
                            }
                        }
                    }
                    out.push((*weight, dw));
                }
                if let Some(b) = bias {
                    let mut db = vec![0.0; f_out];
                    for i in 0..n {
                        for o in 0..f_out {
                            db[o] += gout[i * f_out + o];
                        }
                    }
                    out.push((*b, db));
                }
            }
            Op::Add(a, b) => {
                out.push((*b, gout.clone()));
                out.push((*a, gout));
            }
            Op::Sub(a, b) => {
                out.push((*b, gout.iter().map(|g| -g).collect()));
                out.push((*a, gout));
            }
            Op::Mul(a, b) => {
                out.push((*a, gout.iter().zip(val(*b)).map(|(g, y)| g * y).collect()));
                out.push((*b, gout.iter().zip(val(*a)).map(|(g, x)| g * x).collect()));
            }
            Op::Scale(a, f) => out.push((*a, gout.iter().map(|g| g * f).collect())),
            Op::ChannelScale { input, scale } => {
                let shape = self.shape(*input);
                let plane = shape[2] * shape[3];
                let x = val(*input);
                let s = val(*scale);
                if self.needs(*input) {
                    let dx = gout
                        .chunks_exact(plane)
                        .zip(s)
                        .flat_map(|(p, &g)| p.iter().map(move |v| v * g))
                        .collect();
                    out.push((*input, dx));
                }
                let ds = gout
                    .chunks_exact(plane)
                    .zip(x.chunks_exact(plane))
                    .map(|(gp, xp)| conv::dot(gp, xp))
                    .collect();
                out.push((*scale, ds));
            }
            Op::Abs(a) => {
                let dx = val(*a)
                    .iter()
                    .zip(&gout)
                    .map(|(&x, &g)| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                out.push((*a, dx));
            }
            Op::Sum(a) => out.push((*a, vec![gout[0]; self.value(*a).len()])),
            Op::Mean(a) => {
                let n = self.value(*a).len();
                out.push((*a, vec![gout[0] / n as f64; n]));
            }
            Op::PairwiseDiff(a) => {
                let n = self.value(*a).len();
                let mut dx = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        dx[i] += g;
                        dx[j] -= g;
                    }
                }
                out.push((*a, dx));
            }
        }
        out
    }
}
