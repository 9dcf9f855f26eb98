//! Multi-stage progressive training for lightweight image quality regression.
//!
//! A micro MobileNetV3-style network is trained through a three-stage
//! resolution and data curriculum with a combined MAE + pairwise ranking
//! objective, its last-stage checkpoints are averaged, and the result is scored
//! with SRCC/PLCC and audited for parameter and compute cost.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: f64 tensors and a reverse-mode autodiff graph
//! - [`micronet`]: the network, checkpoints and weight averaging
//! - [`losses`]: MAE, pairwise hinge ranking loss and their sum
//! - [`metrics`]: SRCC, PLCC and the final score
//! - [`data`]: synthetic dataset, augmentation and resize transforms
//! - [`trainer`]: AdamW, cosine schedule, stages and the full pipeline
//! - [`profiler`]: parameter/MAC counts and runtime
//! - [`config`], [`ablation`], [`cli`]: the command-line front end

pub mod ablation;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod micronet;
pub mod profiler;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
