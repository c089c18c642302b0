use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: [usize; 4],
    out_shape: [usize; 4],
    /// Flat input index of the maximum of each output window.
    argmax: Vec<usize>,
}

impl PoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Non-overlapping `k×k` max pooling with stride `k`. Trailing rows and
/// columns that do not fill a window are dropped; ties go to the lowest flat
/// index.
pub fn maxpool2d<T: Real>(input: &Tensor<T>, k: usize) -> Result<(Tensor<T>, PoolCache)> {
    if k == 0 {
        bail!(Param, "pool window must be positive");
    }
    let [n, c, h, w] = input.dims4()?;
    if h < k || w < k {
        bail!(Shape, "pool window {} exceeds input extent {}x{}", k, h, w);
    }
    let (ho, wo) = (h / k, w / k);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * k * w + ox * k;
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = base + (oy * k + dy) * w + ox * k + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let output = Tensor::new(&[n, c, ho, wo], out)?;
    Ok((output, PoolCache { input_shape: [n, c, h, w], out_shape: [n, c, ho, wo], argmax }))
}

/// Routes each upstream gradient to the argmax position of its window.
pub fn maxpool2d_grad<T: Real>(cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.out_shape {
        bail!(Shape, "pool grad {:?} does not match forward output {:?}", grad_out.shape(), cache.out_shape);
    }
    let mut g = vec![T::zero(); cache.input_shape.iter().product()];
    for (&idx, &v) in cache.argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Tensor::new(&cache.input_shape, g)
}
