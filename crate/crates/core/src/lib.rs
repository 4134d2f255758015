//! Building blocks for flow-guided video super-resolution experiments:
//! tensors, dense optical flow, backward warping with rescaling-based
//! alignment, frequency and correlation metrics, and a diffusion sampler
//! with per-step guidance from neighbouring frames.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corr;
pub mod diffusion;
pub mod error;
pub mod flow;
pub mod freq;
pub mod harness;
mod plane;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowField};
pub use tensor::Tensor;
