//! The quality-regression network: a small MobileNetV3-style stack of
//! inverted-residual blocks with squeeze-excite gates, a pooled head and a
//! sigmoid output, plus checkpoint I/O and weight averaging.

mod arch;
mod checkpoint;
mod model;
mod swa;

pub use arch::{ArchConfig, BlockSpec, LayerInfo, LayerKind};
pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use model::{build_model, Forward, Mode, ModelState, BN_EPS, BN_MOMENTUM, MIN_RESOLUTION};
pub use swa::{average_weights, recompute_bn_stats};
