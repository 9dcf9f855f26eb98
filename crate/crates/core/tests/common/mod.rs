//! Reference implementations shared by the integration tests and the
//! acceptance harness. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use mspt::losses::{l1_rank_loss, mae_loss, rank_loss, LossConfig};
use mspt::micronet::{build_model, ArchConfig, Mode};
use mspt::tensor::{Activation, BatchNormMode, Graph, RunningStats, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Uniform values in `[lo, hi)` kept at least `gap` away from every kink.
pub fn rand_away_from(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64, kinks: &[f64], gap: f64) -> Tensor {
    let n = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let v: f64 = rng.random_range(lo..hi);
        if kinks.iter().all(|k| (v - k).abs() > gap) {
            data.push(v);
        }
    }
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Direct seven-deep loop nest over `[N, C, H, W]` with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    b: Option<&[f64]>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, cin, h, wd] = xs;
    let [cout, cpg, k, k2] = ws;
    assert_eq!(k, k2);
    assert_eq!(cpg * groups, cin);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let opg = cout / groups;
    let mut out = vec![0.0; n * cout * oh * ow];
    for ni in 0..n {
        for co in 0..cout {
            let g = co / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b[co]);
                    for ci in 0..cpg {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let cin_idx = g * cpg + ci;
                                let xv = x[((ni * cin + cin_idx) * h + iy as usize) * wd + ix as usize];
                                let wv = w[((co * cpg + ci) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((ni * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Scalar value of a graph built from constant inputs.
pub fn eval_scalar<F>(build: &F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.value(out).item().unwrap()
}

/// Reverse-mode gradients with respect to every input.
pub fn autodiff<F>(build: &F, inputs: &[Tensor]) -> Vec<Tensor>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

/// Central differences of the scalar graph with respect to input `which`.
pub fn central_diff<F>(build: &F, inputs: &[Tensor], which: usize, h: f64) -> Vec<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut work = inputs.to_vec();
    (0..inputs[which].len())
        .map(|i| {
            let x0 = inputs[which].data()[i];
            work[which].data_mut()[i] = x0 + h;
            let up = eval_scalar(build, &work);
            work[which].data_mut()[i] = x0 - h;
            let down = eval_scalar(build, &work);
            work[which].data_mut()[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error between autodiff and central differences over
/// all inputs.
pub fn max_grad_error<F>(build: &F, inputs: &[Tensor], h: f64, floor: f64) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let analytic = autodiff(build, inputs);
    let mut worst = 0.0f64;
    for (k, a) in analytic.iter().enumerate() {
        let numeric = central_diff(build, inputs, k, h);
        for (x, y) in a.data().iter().zip(&numeric) {
            worst = worst.max(rel_err(*x, *y, floor));
        }
    }
    worst
}

/// 1-based ranks by counting: `1 + #{x_j < x_i} + (#{x_j == x_i} − 1) / 2`.
pub fn rank_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation via the raw-moment formula.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let cov = sxy - sx * sy / n;
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    cov / (vx * vy).sqrt()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&rank_oracle(x), &rank_oracle(y))
}

/// `1 − 6 Σ d² / (n (n² − 1))` with the rank differences summed as integers.
pub fn spearman_closed_form_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<i64> {
        v.iter().map(|&a| 1 + v.iter().filter(|&&b| b < a).count() as i64).collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let d2: i64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = x.len() as f64;
    1.0 - 6.0 * d2 as f64 / (n * (n * n - 1.0))
}

/// `(mae, rank, mae + λ·rank)` by enumerating every ordered pair.
pub fn loss_oracle(pred: &[f64], target: &[f64], lambda: f64) -> (f64, f64, f64) {
    let n = pred.len();
    let mut abs_sum = 0.0;
    for i in 0..n {
        abs_sum += (pred[i] - target[i]).abs();
    }
    let mae = abs_sum / n as f64;
    let mut hinge = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if target[i] >= target[j] { 1.0 } else { -1.0 };
            let margin = (target[i] - target[j]).abs() - e * (pred[i] - pred[j]);
            if margin > 0.0 {
                hinge += margin;
            }
        }
    }
    let rank = hinge / (n * n) as f64;
    (mae, rank, mae + lambda * rank)
}

/// SHA-256 of a byte string, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub type Builder = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

/// `Σ y ⊙ W` for a fixed random `W`, so every output element gets its own
/// upstream gradient.
fn weighted(w: Tensor) -> impl Fn(&mut Graph, Var) -> Var {
    move |g: &mut Graph, y: Var| {
        let c = g.constant(w.clone());
        let p = g.mul(y, c).unwrap();
        g.sum(p)
    }
}

pub struct OpCase {
    pub name: &'static str,
    pub build: Builder,
    pub inputs: Vec<Tensor>,
}

fn case(name: &'static str, inputs: Vec<Tensor>, out_shape: &[usize], seed: u64, f: impl Fn(&mut Graph, &[Var]) -> Var + 'static) -> OpCase {
    let reduce = weighted(rand_tensor(&mut rng(seed ^ 0xabc), out_shape, -1.0, 1.0));
    OpCase {
        name,
        build: Box::new(move |g, v| {
            let y = f(g, v);
            reduce(g, y)
        }),
        inputs,
    }
}

/// One case per differentiable operation, with inputs kept clear of kinks.
pub fn op_cases() -> Vec<OpCase> {
    let mut r = rng(42);
    let mut out = Vec::new();

    let conv = |name, xs: [usize; 4], ws: [usize; 4], bias: bool, stride: usize, pad: usize, groups: usize, r: &mut ChaCha8Rng| {
        let mut inputs = vec![rand_tensor(r, &xs, -1.0, 1.0), rand_tensor(r, &ws, -1.0, 1.0)];
        if bias {
            inputs.push(rand_tensor(r, &[ws[0]], -1.0, 1.0));
        }
        let oh = (xs[2] + 2 * pad - ws[2]) / stride + 1;
        let ow = (xs[3] + 2 * pad - ws[3]) / stride + 1;
        case(name, inputs, &[xs[0], ws[0], oh, ow], 1, move |g, v| {
            g.conv2d(v[0], v[1], v.get(2).copied(), stride, pad, groups).unwrap()
        })
    };
    out.push(conv("conv2d 3x3", [2, 3, 7, 6], [4, 3, 3, 3], true, 1, 1, 1, &mut r));
    out.push(conv("conv2d grouped stride 2", [2, 4, 8, 8], [6, 2, 3, 3], true, 2, 1, 2, &mut r));
    out.push(conv("conv2d depthwise", [1, 5, 6, 6], [5, 1, 3, 3], false, 2, 1, 5, &mut r));
    out.push(conv("conv2d 1x1", [2, 3, 5, 5], [4, 3, 1, 1], false, 1, 0, 1, &mut r));

    for (name, shape) in [("batch_norm train NCHW", vec![3, 4, 3, 3]), ("batch_norm train NC", vec![5, 3])] {
        let c = shape[1];
        let inputs = vec![rand_tensor(&mut r, &shape, -2.0, 2.0), rand_tensor(&mut r, &[c], 0.5, 1.5), rand_tensor(&mut r, &[c], -0.5, 0.5)];
        out.push(case(name, inputs, &shape, 2, |g, v| g.batch_norm(v[0], v[1], v[2], BatchNormMode::Train, 1e-5).unwrap().0));
    }
    {
        let stats = RunningStats { mean: vec![0.1, -0.2, 0.3], var: vec![0.5, 1.5, 2.0] };
        let inputs = vec![rand_tensor(&mut r, &[2, 3, 2, 2], -2.0, 2.0), rand_tensor(&mut r, &[3], 0.5, 1.5), rand_tensor(&mut r, &[3], -0.5, 0.5)];
        out.push(case("batch_norm eval", inputs, &[2, 3, 2, 2], 3, move |g, v| {
            g.batch_norm(v[0], v[1], v[2], BatchNormMode::Eval(Some(&stats)), 1e-5).unwrap().0
        }));
    }

    for (name, act, kinks) in [
        ("relu", Activation::Relu, vec![0.0]),
        ("hard_swish", Activation::HardSwish, vec![-3.0, 3.0]),
        ("hard_sigmoid", Activation::HardSigmoid, vec![-3.0, 3.0]),
        ("sigmoid", Activation::Sigmoid, vec![]),
    ] {
        let x = rand_away_from(&mut r, &[3, 20], -5.0, 5.0, &kinks, 1e-3);
        out.push(case(name, vec![x], &[3, 20], 4, move |g, v| g.activation(act, v[0])));
    }

    let x = rand_tensor(&mut r, &[2, 3, 4, 5], -1.0, 1.0);
    out.push(case("global_avg_pool", vec![x], &[2, 3, 1, 1], 5, |g, v| g.global_avg_pool(v[0]).unwrap()));
    let x = rand_tensor(&mut r, &[2, 3, 2, 2], -1.0, 1.0);
    out.push(case("flatten", vec![x], &[2, 12], 6, |g, v| g.flatten(v[0]).unwrap()));
    let x = rand_tensor(&mut r, &[2, 6], -1.0, 1.0);
    out.push(case("reshape", vec![x], &[3, 4], 6, |g, v| g.reshape(v[0], vec![3, 4]).unwrap()));

    let inputs = vec![rand_tensor(&mut r, &[3, 5], -1.0, 1.0), rand_tensor(&mut r, &[4, 5], -1.0, 1.0), rand_tensor(&mut r, &[4], -1.0, 1.0)];
    out.push(case("linear", inputs, &[3, 4], 7, |g, v| g.linear(v[0], v[1], Some(v[2])).unwrap()));
    let inputs = vec![rand_tensor(&mut r, &[3, 5], -1.0, 1.0), rand_tensor(&mut r, &[2, 5], -1.0, 1.0)];
    out.push(case("linear without bias", inputs, &[3, 2], 7, |g, v| g.linear(v[0], v[1], None).unwrap()));

    let pair = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[3, 4], -1.0, 1.0), rand_tensor(r, &[3, 4], -1.0, 1.0)];
    out.push(case("add", pair(&mut r), &[3, 4], 8, |g, v| g.add(v[0], v[1]).unwrap()));
    out.push(case("sub", pair(&mut r), &[3, 4], 8, |g, v| g.sub(v[0], v[1]).unwrap()));
    out.push(case("mul", pair(&mut r), &[3, 4], 8, |g, v| g.mul(v[0], v[1]).unwrap()));
    out.push(case("scale", vec![rand_tensor(&mut r, &[3, 4], -1.0, 1.0)], &[3, 4], 8, |g, v| g.scale(v[0], -1.75)));
    let inputs = vec![rand_tensor(&mut r, &[2, 3, 2, 3], -1.0, 1.0), rand_tensor(&mut r, &[2, 3], 0.0, 1.0)];
    out.push(case("channel_scale", inputs, &[2, 3, 2, 3], 9, |g, v| g.channel_scale(v[0], v[1]).unwrap()));
    let x = rand_away_from(&mut r, &[4, 4], -1.0, 1.0, &[0.0], 1e-3);
    out.push(case("abs", vec![x], &[4, 4], 10, |g, v| g.abs(v[0])));
    out.push(case("sum", vec![rand_tensor(&mut r, &[3, 3], -1.0, 1.0)], &[1], 11, |g, v| g.sum(v[0])));
    out.push(case("mean", vec![rand_tensor(&mut r, &[3, 3], -1.0, 1.0)], &[1], 11, |g, v| g.mean(v[0])));
    out.push(case("pairwise_diff", vec![rand_tensor(&mut r, &[5, 1], -1.0, 1.0)], &[5, 5], 12, |g, v| g.pairwise_diff(v[0]).unwrap()));

    let target = Tensor::new(vec![6, 1], vec![0.1, 0.9, 0.4, 0.4, 0.7, 0.2]).unwrap();
    let pred = Tensor::new(vec![6, 1], vec![0.3, 0.5, 0.8, 0.1, 0.65, 0.05]).unwrap();
    for (name, which) in [("mae_loss", 0), ("rank_loss", 1), ("l1_rank_loss", 2)] {
        let t = target.clone();
        out.push(OpCase {
            name,
            build: Box::new(move |g, v| match which {
                0 => mae_loss(g, v[0], &t).unwrap(),
                1 => rank_loss(g, v[0], &t).unwrap(),
                _ => l1_rank_loss(g, v[0], &t, &LossConfig::default()).unwrap(),
            }),
            inputs: vec![pred.clone()],
        });
    }
    out
}

/// Training loss of the default network on a 2×3×16×16 batch, as a function
/// of the input and every parameter (in that order).
pub fn micronet_case() -> OpCase {
    let model = build_model(&ArchConfig::desk(), 3).unwrap();
    let mut r = rng(5);
    let x = rand_tensor(&mut r, &[2, 3, 16, 16], 0.0, 1.0);
    let target = Tensor::new(vec![2, 1], vec![0.2, 0.7]).unwrap();
    let mut inputs = vec![x];
    inputs.extend(model.params().iter().map(|(_, t)| t.clone()));
    OpCase {
        name: "micro-net l1_rank_loss",
        build: Box::new(move |g, v| {
            let (out, _) = model.forward_with(g, &v[1..], v[0], Mode::Train).unwrap();
            l1_rank_loss(g, out, &target, &LossConfig::default()).unwrap()
        }),
        inputs,
    }
}

/// `count` random `(x, y)` pairs with `n ∈ [2, 64]`; every other pair is
/// drawn from a small integer alphabet so ties are common. Constant vectors
/// are redrawn.
pub fn metric_vectors(seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<f64>, bool)> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = r.random_range(2..=64usize);
        let tied = out.len() % 2 == 0;
        let alphabet = (n / 3).max(2) as u32;
        let draw = |r: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if tied { r.random_range(0..alphabet) as f64 * 0.25 } else { r.random_range(-10.0..10.0) })
                .collect()
        };
        let (x, y) = (draw(&mut r), draw(&mut r));
        let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        if constant(&x) || constant(&y) {
            continue;
        }
        out.push((x, y, tied));
    }
    out
}

pub fn has_ties(v: &[f64]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[i + 1..].contains(a))
}
