//! Training engine for small convolutional networks with an adaptive
//! batch-normalization gate.
//!
//! The gate calibrates a per-class mean of instance averages during the first
//! epoch, widens each class mean into an interval, and from the second epoch
//! on normalizes a training batch only when one of its instances falls outside
//! its class interval.
//!
//! Everything here is `no_std` with `alloc`: tensors and layers, the
//! batch-normalization layer, the gate, batching and fold splitting, and the
//! trainer. File formats, configuration files and reports live in the `adabn`
//! companion crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod batchnorm;
pub mod data;
pub mod error;
pub mod gate;
pub mod gradcheck;
pub mod nn;
pub mod real;
mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
