//! Mixed-precision low-rank compression of fine-tuned weight deltas.
//!
//! A fine-tuned model is stored as a shared backbone plus a per-model delta.
//! Each delta matrix is factored by SVD and its singular vectors are quantized
//! in rank groups, with more bits for the groups carrying larger singular values.

pub mod alloc_track;
pub mod analyzer;
pub mod bench;
pub mod error;
pub mod model_io;
pub mod numerics;
pub mod pipeline;
pub mod planner;
pub mod quant;

pub use error::{Error, ErrorClass, Result};
