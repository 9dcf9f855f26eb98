//! Direct convolution kernels over NCHW slices.
//!
//! Spatial kernels go through an im2col buffer per (sample, group) so every
//! inner loop is a contiguous axpy or dot over one output plane; 1×1 stride-1
//! kernels read the input planes directly.

use crate::error::{Error, Result};

/// Resolved shapes of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn resolve(
        input: &[usize],
        weight: &[usize],
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::invalid(format!(
                "conv2d input must be NCHW, got shape {input:?}"
            )));
        }
        if weight.len() != 4 {
            return Err(Error::invalid(format!(
                "conv2d weight must be [Cout, Cin/groups, Kh, Kw], got shape {weight:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if groups == 0 {
            return Err(Error::invalid("conv2d groups must be positive"));
        }
        let (batch, in_channels, in_h, in_w) = (input[0], input[1], input[2], input[3]);
        let (out_channels, per_group, kernel_h, kernel_w) =
            (weight[0], weight[1], weight[2], weight[3]);
        if in_channels % groups != 0 {
            return Err(Error::invalid(format!(
                "conv2d input channels {in_channels} not divisible by groups {groups}"
            )));
        }
        if out_channels % groups != 0 {
            return Err(Error::invalid(format!(
                "conv2d output channels {out_channels} not divisible by groups {groups}"
            )));
        }
        if per_group != in_channels / groups {
            return Err(Error::invalid(format!(
                "conv2d weight dim 1 is {per_group}, expected Cin/groups = {}",
                in_channels / groups
            )));
        }
        if in_h + 2 * padding < kernel_h {
            return Err(Error::invalid(format!(
                "conv2d padded height {} smaller than kernel height {kernel_h}",
                in_h + 2 * padding
            )));
        }
        if in_w + 2 * padding < kernel_w {
            return Err(Error::invalid(format!(
                "conv2d padded width {} smaller than kernel width {kernel_w}",
                in_w + 2 * padding
            )));
        }
        Ok(ConvGeometry {
            batch,
            in_channels,
            in_h,
            in_w,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            groups,
            out_h: (in_h + 2 * padding - kernel_h) / stride + 1,
            out_w: (in_w + 2 * padding - kernel_w) / stride + 1,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h, self.out_w]
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Output indices `o` with `0 <= o*stride + k - pad < len`, as a half-open range.
fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Dot product with four independent accumulators. Summation order is fixed,
/// so results do not depend on how the compiler vectorises.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sum with four independent accumulators (fixed order).
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.chunks_exact(4);
    let rest = chunks.remainder();
    for x in chunks {
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest.iter().sum::<f64>()
}

/// `Σ (a_i − m)²` with four independent accumulators (fixed order).
pub(crate) fn sq_dev(a: &[f64], m: f64) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.chunks_exact(4);
    let rest = chunks.remainder();
    for x in chunks {
        for k in 0..4 {
            let d = x[k] - m;
            acc[k] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
}

#[inline]
fn axpy(dst: &mut [f64], w: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

/// Unfold the input channels of one group of one sample into
/// `[cin_g * kh * kw, out_h * out_w]` columns (zeros where the tap hits padding).
fn im2col(g: &ConvGeometry, input: &[f64], n: usize, group: usize, col: &mut [f64]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let cin_g = g.in_per_group();
    col.fill(0.0);
    for cl in 0..cin_g {
        let ci = group * cin_g + cl;
        let src = &input[(n * g.in_channels + ci) * in_plane..][..in_plane];
        for kh in 0..g.kernel_h {
            let (oh_lo, oh_hi) = valid_range(kh, g.padding, g.stride, g.in_h, g.out_h);
            for kw in 0..g.kernel_w {
                let (ow_lo, ow_hi) = valid_range(kw, g.padding, g.stride, g.in_w, g.out_w);
                let row = (cl * g.kernel_h + kh) * g.kernel_w + kw;
                let dst = &mut col[row * out_plane..][..out_plane];
                if ow_lo >= ow_hi {
                    continue;
                }
                let span = ow_hi - ow_lo;
                for oh in oh_lo..oh_hi {
                    let ih = oh * g.stride + kh - g.padding;
                    let iw0 = ow_lo * g.stride + kw - g.padding;
                    let srow = &src[ih * g.in_w..][..g.in_w];
                    let drow = &mut dst[oh * g.out_w + ow_lo..][..span];
                    if g.stride == 1 {
                        drow.copy_from_slice(&srow[iw0..iw0 + span]);
                    } else {
                        for (k, d) in drow.iter_mut().enumerate() {
                            *d = srow[iw0 + k * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back onto the input gradient (adjoint of [`im2col`]).
fn col2im(g: &ConvGeometry, col: &[f64], n: usize, group: usize, grad_in: &mut [f64]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let cin_g = g.in_per_group();
    for cl in 0..cin_g {
        let ci = group * cin_g + cl;
        let din = &mut grad_in[(n * g.in_channels + ci) * in_plane..][..in_plane];
        for kh in 0..g.kernel_h {
            let (oh_lo, oh_hi) = valid_range(kh, g.padding, g.stride, g.in_h, g.out_h);
            for kw in 0..g.kernel_w {
                let (ow_lo, ow_hi) = valid_range(kw, g.padding, g.stride, g.in_w, g.out_w);
                if ow_lo >= ow_hi {
                    continue;
                }
                let row = (cl * g.kernel_h + kh) * g.kernel_w + kw;
                let src = &col[row * out_plane..][..out_plane];
                let span = ow_hi - ow_lo;
                for oh in oh_lo..oh_hi {
                    let ih = oh * g.stride + kh - g.padding;
                    let iw0 = ow_lo * g.stride + kw - g.padding;
                    let irow = &mut din[ih * g.in_w..][..g.in_w];
                    let crow = &src[oh * g.out_w + ow_lo..][..span];
                    if g.stride == 1 {
                        for (d, c) in irow[iw0..iw0 + span].iter_mut().zip(crow) {
                            *d += c;
                        }
                    } else {
                        for (k, c) in crow.iter().enumerate() {
                            irow[iw0 + k * g.stride] += c;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let cin_g = g.in_per_group();
    let cout_g = g.out_per_group();
    let rows = cin_g * g.kernel_h * g.kernel_w;
    let mut out = vec![0.0; g.batch * g.out_channels * out_plane];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * out_plane] };

    for n in 0..g.batch {
        for group in 0..g.groups {
            if !g.is_pointwise() {
                im2col(g, input, n, group, &mut col);
            }
            for co in group * cout_g..(group + 1) * cout_g {
                let dst = &mut out[(n * g.out_channels + co) * out_plane..][..out_plane];
                if let Some(b) = bias {
                    dst.fill(b[co]);
                }
                let wrow = &weight[co * rows..][..rows];
                for (r, &w) in wrow.iter().enumerate() {
                    let src = if g.is_pointwise() {
                        &input[(n * g.in_channels + group * cin_g + r) * in_plane..][..in_plane]
                    } else {
                        &col[r * out_plane..][..out_plane]
                    };
                    axpy(dst, w, src);
                }
            }
        }
    }
    out
}

pub(crate) fn backward_input(g: &ConvGeometry, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let cin_g = g.in_per_group();
    let cout_g = g.out_per_group();
    let rows = cin_g * g.kernel_h * g.kernel_w;
    let mut grad_in = vec![0.0; g.batch * g.in_channels * in_plane];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * out_plane] };

    for n in 0..g.batch {
        for group in 0..g.groups {
            col.fill(0.0);
            for co in group * cout_g..(group + 1) * cout_g {
                let dout = &grad_out[(n * g.out_channels + co) * out_plane..][..out_plane];
                let wrow = &weight[co * rows..][..rows];
                for (r, &w) in wrow.iter().enumerate() {
                    let dst = if g.is_pointwise() {
                        &mut grad_in[(n * g.in_channels + group * cin_g + r) * in_plane..][..in_plane]
                    } else {
                        &mut col[r * out_plane..][..out_plane]
                    };
                    axpy(dst, w, dout);
                }
            }
            if !g.is_pointwise() {
                col2im(g, &col, n, group, &mut grad_in);
            }
        }
    }
    grad_in
}

pub(crate) fn backward_weight(g: &ConvGeometry, grad_out: &[f64], input: &[f64]) -> Vec<f64> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let cin_g = g.in_per_group();
    let cout_g = g.out_per_group();
    let rows = cin_g * g.kernel_h * g.kernel_w;
    let mut grad_w = vec![0.0; g.out_channels * rows];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * out_plane] };

    for n in 0..g.batch {
        for group in 0..g.groups {
            if !g.is_pointwise() {
                im2col(g, input, n, group, &mut col);
            }
            for co in group * cout_g..(group + 1) * cout_g {
                let dout = &grad_out[(n * g.out_channels + co) * out_plane..][..out_plane];
                let grow = &mut grad_w[co * rows..][..rows];
                for (r, gw) in grow.iter_mut().enumerate() {
                    let src = if g.is_pointwise() {
                        &input[(n * g.in_channels + group * cin_g + r) * in_plane..][..in_plane]
                    } else {
                        &col[r * out_plane..][..out_plane]
                    };
                    *gw += dot(dout, src);
                }
            }
        }
    }
    grad_w
}

pub(crate) fn backward_bias(g: &ConvGeometry, grad_out: &[f64]) -> Vec<f64> {
    let out_plane = g.out_h * g.out_w;
    let mut grad_b = vec![0.0; g.out_channels];
    for n in 0..g.batch {
        for (co, gb) in grad_b.iter_mut().enumerate() {
            *gb += sum(&grad_out[(n * g.out_channels + co) * out_plane..][..out_plane]);
        }
    }
    grad_b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bruteforce() {
        for len in 1..9 {
            for k in 0..3 {
                for pad in 0..2 {
                    for stride in 1..3 {
                        if len + 2 * pad < 3 {
                            continue;
                        }
                        let out_len = (len + 2 * pad - 3) / stride + 1;
                        let brute: Vec<usize> = (0..out_len)
                            .filter(|&o| {
                                let i = (o * stride + k) as isize - pad as isize;
                                i >= 0 && (i as usize) < len
                            })
                            .collect();
                        let (lo, hi) = valid_range(k, pad, stride, len, out_len);
                        assert_eq!((lo..hi).collect::<Vec<_>>(), brute, "len={len} k={k} pad={pad} s={stride}");
                    }
                }
            }
        }
    }

    #[test]
    fn geometry_rejects_bad_groups() {
        let err = ConvGeometry::resolve(&[1, 3, 8, 8], &[4, 1, 3, 3], 1, 1, 3).unwrap_err();
        assert!(err.to_string().contains("output channels"), "{err}");
        let err = ConvGeometry::resolve(&[1, 4, 8, 8], &[4, 2, 3, 3], 1, 1, 4).unwrap_err();
        assert!(err.to_string().contains("weight dim 1"), "{err}");
    }
}
