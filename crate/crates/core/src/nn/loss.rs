use alloc::vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SoftmaxLoss<T = f32> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
    /// `(probs - onehot) / N`
    pub grad_logits: Tensor<T>,
}

/// Row-wise softmax followed by mean cross-entropy against integer labels.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<SoftmaxLoss<T>> {
    let [n, c] = logits.dims2()?;
    if labels.len() != n {
        bail!(Shape, "{} labels for {} logit rows", labels.len(), n);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        bail!(Data, "label {} out of range for {} classes", bad, c);
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut probs = vec![T::zero(); n * c];
    let mut grad = vec![T::zero(); n * c];
    let mut total = T::zero();
    for (i, (row, &label)) in logits.data().chunks_exact(c).zip(labels).enumerate() {
        let (top, max) = row
            .iter()
            .enumerate()
            .fold((0, row[0]), |(bi, bv), (j, &v)| if v > bv { (j, v) } else { (bi, bv) });
        // exp(max - max) is exactly one, so the log-sum-exp is ln(1 + rest).
        let rest: T = row.iter().enumerate().filter(|&(j, _)| j != top).map(|(_, &v)| (v - max).exp()).sum();
        let log_z = rest.ln_1p();
        total += log_z - (row[label] - max);
        let p = &mut probs[i * c..(i + 1) * c];
        for (pj, &v) in p.iter_mut().zip(row) {
            *pj = (v - max - log_z).exp();
        }
        let g = &mut grad[i * c..(i + 1) * c];
        for (j, (gj, &pj)) in g.iter_mut().zip(p.iter()).enumerate() {
            let target = if j == label { T::one() } else { T::zero() };
            *gj = (pj - target) * inv_n;
        }
    }
    Ok(SoftmaxLoss {
        loss: total * inv_n,
        probs: Tensor::new(&[n, c], probs)?,
        grad_logits: Tensor::new(&[n, c], grad)?,
    })
}
