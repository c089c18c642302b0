use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ReluCache {
    shape: Vec<usize>,
    active: Vec<bool>,
}

/// Elementwise `max(0, x)`.
pub fn relu<T: Real>(input: &Tensor<T>) -> (Tensor<T>, ReluCache) {
    let active: Vec<bool> = input.data().iter().map(|&v| v > T::zero()).collect();
    let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
    (out, ReluCache { shape: input.shape().to_vec(), active })
}

/// Passes `grad_out` through where the input was positive; the subgradient at
/// zero is taken as zero.
pub fn relu_grad<T: Real>(cache: &ReluCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.shape.as_slice() {
        bail!(Shape, "relu grad {:?} does not match forward {:?}", grad_out.shape(), cache.shape);
    }
    let data = grad_out
        .data()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &a)| if a { g } else { T::zero() })
        .collect();
    Tensor::new(&cache.shape, data)
}
