use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Activation;

/// One inverted-residual block: 1×1 expand, depthwise k×k, optional
/// squeeze-excite, 1×1 linear projection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub expansion: usize,
    pub stride: usize,
    pub use_se: bool,
    pub activation: Activation,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_kernel() -> usize {
    3
}

impl BlockSpec {
    pub fn hidden_channels(&self) -> usize {
        self.in_channels * self.expansion
    }

    /// Squeeze-excite bottleneck width.
    pub fn se_channels(&self) -> usize {
        (self.hidden_channels() / 4).max(1)
    }

    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }
}

/// Network topology. Everything that determines parameter shapes lives here,
/// so its hash identifies checkpoint compatibility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_activation: Activation,
    pub blocks: Vec<BlockSpec>,
    pub head_channels: usize,
    pub head_hidden: usize,
    pub head_activation: Activation,
    pub output_activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ArchConfig {
    /// The default desk-scale network (about 16k parameters).
    pub fn desk() -> Self {
        let block = |i, o, e, s, act| BlockSpec {
            in_channels: i,
            out_channels: o,
            expansion: e,
            stride: s,
            use_se: true,
            activation: act,
            kernel: 3,
        };
        ArchConfig {
            in_channels: 3,
            stem_channels: 8,
            stem_activation: Activation::HardSwish,
            blocks: vec![
                block(8, 16, 2, 2, Activation::Relu),
                block(16, 24, 3, 2, Activation::HardSwish),
                block(24, 24, 3, 1, Activation::HardSwish),
            ],
            head_channels: 64,
            head_hidden: 32,
            head_activation: Activation::HardSwish,
            output_activation: Activation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("stem_channels", self.stem_channels),
            ("head_channels", self.head_channels),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("arch.{name} must be positive")));
            }
        }
        let mut channels = self.stem_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.in_channels != channels {
                return Err(Error::Config(format!(
                    "arch.blocks[{i}].in_channels is {}, previous layer produces {channels}",
                    b.in_channels
                )));
            }
            if !matches!(b.stride, 1 | 2) {
                return Err(Error::Config(format!(
                    "arch.blocks[{i}].stride must be 1 or 2, got {}",
                    b.stride
                )));
            }
            if b.expansion == 0 || b.out_channels == 0 {
                return Err(Error::Config(format!(
                    "arch.blocks[{i}] needs positive expansion and out_channels"
                )));
            }
            if b.kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "arch.blocks[{i}].kernel must be odd, got {}",
                    b.kernel
                )));
            }
            channels = b.out_channels;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("ArchConfig serializes");
        Sha256::digest(&bytes).into()
    }

    /// Every parameterised layer in parameter order, with spatial sizes for
    /// a square input of side `resolution`.
    pub fn layers(&self, resolution: usize) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let mut hw = resolution;
        let mut push = |name: String, kind: LayerKind, hw_in: usize| -> usize {
            let hw_out = kind.output_side(hw_in);
            out.push(LayerInfo {
                name,
                kind,
                in_side: hw_in,
                out_side: hw_out,
            });
            hw_out
        };

        hw = push("stem.conv".into(), LayerKind::conv(self.in_channels, self.stem_channels, 3, 2, 1), hw);
        hw = push("stem.bn".into(), LayerKind::BatchNorm { channels: self.stem_channels }, hw);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            let hidden = b.hidden_channels();
            if b.expansion != 1 {
                hw = push(format!("{p}.expand.conv"), LayerKind::conv(b.in_channels, hidden, 1, 1, 1), hw);
                hw = push(format!("{p}.expand.bn"), LayerKind::BatchNorm { channels: hidden }, hw);
            }
            hw = push(
                format!("{p}.dw.conv"),
                LayerKind::Conv {
                    in_channels: hidden,
                    out_channels: hidden,
                    kernel: b.kernel,
                    stride: b.stride,
                    padding: b.kernel / 2,
                    groups: hidden,
                    bias: false,
                },
                hw,
            );
            hw = push(format!("{p}.dw.bn"), LayerKind::BatchNorm { channels: hidden }, hw);
            if b.use_se {
                let se = b.se_channels();
                push(format!("{p}.se.fc1"), LayerKind::Linear { in_features: hidden, out_features: se }, 1);
                push(format!("{p}.se.fc2"), LayerKind::Linear { in_features: se, out_features: hidden }, 1);
            }
            hw = push(format!("{p}.project.conv"), LayerKind::conv(hidden, b.out_channels, 1, 1, 1), hw);
            hw = push(format!("{p}.project.bn"), LayerKind::BatchNorm { channels: b.out_channels }, hw);
        }
        let last = self.blocks.last().map_or(self.stem_channels, |b| b.out_channels);
        hw = push("head.conv".into(), LayerKind::conv(last, self.head_channels, 1, 1, 1), hw);
        push("head.bn".into(), LayerKind::BatchNorm { channels: self.head_channels }, hw);
        push(
            "head.fc1".into(),
            LayerKind::Linear { in_features: self.head_channels, out_features: self.head_hidden },
            1,
        );
        push("head.fc2".into(), LayerKind::Linear { in_features: self.head_hidden, out_features: 1 }, 1);
        out
    }
}

/// Parameterised layer types.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerKind {
    /// Bias-free conv with `padding = kernel / 2`.
    fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, groups: usize) -> Self {
        LayerKind::Conv {
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding: kernel / 2,
            groups,
            bias: false,
        }
    }

    pub fn output_side(&self, side: usize) -> usize {
        match self {
            LayerKind::Conv {
                kernel,
                stride,
                padding,
                ..
            } => (side + 2 * padding - kernel) / stride + 1,
            LayerKind::BatchNorm { .. } => side,
            LayerKind::Linear { .. } => 1,
        }
    }

    /// Learnable parameters. Batch-norm running statistics are excluded.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                groups,
                bias,
                ..
            } => out_channels * (in_channels / groups) * kernel * kernel + if bias { out_channels } else { 0 },
            LayerKind::BatchNorm { channels } => 2 * channels,
            LayerKind::Linear {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
        }
    }

    /// Non-learnable buffers (running mean and variance).
    pub fn buffer_count(&self) -> usize {
        match *self {
            LayerKind::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Multiply-accumulates for one image whose output side is `out_side`.
    pub fn macs(&self, out_side: usize) -> u64 {
        match *self {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                groups,
                ..
            } => (out_channels * (in_channels / groups) * kernel * kernel * out_side * out_side) as u64,
            LayerKind::BatchNorm { .. } => 0,
            LayerKind::Linear {
                in_features,
                out_features,
            } => (out_features * in_features) as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub in_side: usize,
    pub out_side: usize,
}
