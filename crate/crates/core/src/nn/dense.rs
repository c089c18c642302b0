use alloc::vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Fully connected layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    /// `[in_dim, out_dim]`
    pub weights: Tensor<T>,
    /// `[out_dim]`
    pub bias: Tensor<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [_, out] = weights.dims2()?;
        if bias.shape() != [out] {
            bail!(Shape, "bias shape {:?} does not match output width {}", bias.shape(), out);
        }
        Ok(DenseParams { weights, bias })
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache<T = f32> {
    input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `input · weights + bias`, bias broadcast over rows.
pub fn dense_affine<T: Real>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<(Tensor<T>, DenseCache<T>)> {
    let [n, d] = input.dims2()?;
    let [wd, out] = params.weights.dims2()?;
    if d != wd {
        bail!(Shape, "dense input width {} does not match weights {:?}", d, params.weights.shape());
    }
    let mut y = vec![T::zero(); n * out];
    gemm_acc(input.data(), params.weights.data(), &mut y, n, d, out);
    for row in y.chunks_exact_mut(out) {
        for (v, &b) in row.iter_mut().zip(params.bias.data()) {
            *v += b;
        }
    }
    Ok((Tensor::new(&[n, out], y)?, DenseCache { input: input.clone() }))
}

pub fn dense_grad<T: Real>(
    cache: &DenseCache<T>,
    grad_out: &Tensor<T>,
    params: &DenseParams<T>,
) -> Result<DenseGrads<T>> {
    let [n, d] = cache.input.dims2()?;
    let [_, out] = params.weights.dims2()?;
    if grad_out.shape() != [n, out] {
        bail!(Shape, "dense grad {:?} does not match forward output {:?}", grad_out.shape(), [n, out]);
    }
    let g = grad_out.data();
    let mut g_in = vec![T::zero(); n * d];
    gemm_nt_acc(g, params.weights.data(), &mut g_in, n, out, d);
    let mut g_w = vec![T::zero(); d * out];
    gemm_tn_acc(cache.input.data(), g, &mut g_w, d, n, out);
    let mut g_b = vec![T::zero(); out];
    for row in g.chunks_exact(out) {
        for (b, &v) in g_b.iter_mut().zip(row) {
            *b += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(&[n, d], g_in)?,
        weights: Tensor::new(&[d, out], g_w)?,
        bias: Tensor::new(&[out], g_b)?,
    })
}
