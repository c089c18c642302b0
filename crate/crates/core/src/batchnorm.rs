//! Spatial batch normalization.
//!
//! Statistics are taken per channel over the batch and spatial axes of an
//! `[N, C, H, W]` input. Training mode normalizes with the batch statistics
//! (biased variance) and folds them into exponential running averages;
//! evaluation mode normalizes with the running averages.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight of the newest batch in the running averages.
    pub momentum: T,
    pub batches_seen: u64,
}

impl<T: Real> BatchNormParams<T> {
    /// `γ = 1`, `β = 0`, running mean 0 and running variance 1.
    pub fn new(channels: usize) -> Self {
        Self::with_hyper(channels, DEFAULT_EPS, DEFAULT_MOMENTUM).expect("default hyperparameters are valid")
    }

    pub fn with_hyper(channels: usize, eps: f64, momentum: f64) -> Result<Self> {
        if channels == 0 {
            bail!(Param, "batch norm needs at least one channel");
        }
        if !(eps > 0.0) {
            bail!(Param, "eps must be positive, got {}", eps);
        }
        if !(0.0..=1.0).contains(&momentum) {
            bail!(Param, "momentum must be in [0, 1], got {}", momentum);
        }
        Ok(BatchNormParams {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            eps: T::of(eps),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::of(momentum),
            batches_seen: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone)]
pub struct BnCache<T = f32> {
    pub x_hat: Tensor<T>,
    pub mu: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    /// `N·H·W`
    pub reduce_count: usize,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T = f32> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

fn check_channels<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<[usize; 4]> {
    let dims = input.dims4()?;
    if dims[1] != params.channels() {
        bail!(Shape, "input has {} channels, batch norm has {}", dims[1], params.channels());
    }
    Ok(dims)
}

/// Normalizes with the batch statistics without touching the running
/// averages.
pub fn bn_normalize<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = check_channels(input, params)?;
    let plane = h * w;
    let m = n * plane;
    if m == 0 {
        bail!(Data, "empty batch");
    }
    let x = input.data();
    let mut x_hat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    let (mut mus, mut vars, mut inv_stds) = (Vec::with_capacity(c), Vec::with_capacity(c), Vec::with_capacity(c));
    for ch in 0..c {
        let samples = || (0..n).flat_map(move |i| x[(i * c + ch) * plane..][..plane].iter().map(|v| v.f64()));
        let mu = samples().sum::<f64>() / m as f64;
        let var = samples().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        let inv_std = 1.0 / Float::sqrt(var + params.eps.f64());
        let (g, b) = (params.gamma[ch].f64(), params.beta[ch].f64());
        for i in 0..n {
            let range = (i * c + ch) * plane..(i * c + ch + 1) * plane;
            for idx in range {
                let xh = (x[idx].f64() - mu) * inv_std;
                x_hat[idx] = T::of(xh);
                out[idx] = T::of(g * xh + b);
            }
        }
        mus.push(T::of(mu));
        vars.push(T::of(var));
        inv_stds.push(T::of(inv_std));
    }
    let shape = input.shape();
    let cache = BnCache { x_hat: Tensor::new(shape, x_hat)?, mu: mus, var: vars, inv_std: inv_stds, reduce_count: m };
    Ok((Tensor::new(shape, out)?, cache))
}

/// Training-mode forward: normalize with the batch statistics, then update
/// `r ← (1 − momentum)·r + momentum·batch_stat` for mean and variance.
pub fn bn_forward_train<T: Real>(input: &Tensor<T>, params: &mut BatchNormParams<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    let (out, cache) = bn_normalize(input, params)?;
    let mom = params.momentum;
    let keep = T::one() - mom;
    for ch in 0..params.channels() {
        params.running_mean[ch] = keep * params.running_mean[ch] + mom * cache.mu[ch];
        params.running_var[ch] = keep * params.running_var[ch] + mom * cache.var[ch];
    }
    params.batches_seen += 1;
    Ok((out, cache))
}

/// Gradients of the training-mode map, including the dependence of the batch
/// mean and variance on every input element.
pub fn bn_backward<T: Real>(cache: &BnCache<T>, grad_out: &Tensor<T>, params: &BatchNormParams<T>) -> Result<BnGrads<T>> {
    if grad_out.shape() != cache.x_hat.shape() {
        bail!(Shape, "batch norm grad {:?} does not match forward {:?}", grad_out.shape(), cache.x_hat.shape());
    }
    let [n, c, h, w] = check_channels(grad_out, params)?;
    let plane = h * w;
    let m = cache.reduce_count as f64;
    let g = grad_out.data();
    let xh = cache.x_hat.data();
    let mut g_in = vec![T::zero(); g.len()];
    let mut g_gamma = Vec::with_capacity(c);
    let mut g_beta = Vec::with_capacity(c);
    for ch in 0..c {
        let idx = || (0..n).flat_map(move |i| (i * c + ch) * plane..(i * c + ch + 1) * plane);
        let sum_g: f64 = idx().map(|k| g[k].f64()).sum();
        let sum_gx: f64 = idx().map(|k| g[k].f64() * xh[k].f64()).sum();
        let scale = params.gamma[ch].f64() * cache.inv_std[ch].f64() / m;
        for k in idx() {
            g_in[k] = T::of(scale * (m * g[k].f64() - sum_g - xh[k].f64() * sum_gx));
        }
        g_gamma.push(T::of(sum_gx));
        g_beta.push(T::of(sum_g));
    }
    Ok(BnGrads { input: Tensor::new(grad_out.shape(), g_in)?, gamma: g_gamma, beta: g_beta })
}

/// Evaluation-mode forward with the running statistics; `params` is not
/// modified.
pub fn bn_forward_eval<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_channels(input, params)?;
    if params.batches_seen == 0 {
        bail!(State, "evaluation before any training batch");
    }
    let plane = h * w;
    let mut out = input.clone();
    for ch in 0..c {
        let inv_std = T::one() / (params.running_var[ch] + params.eps).sqrt();
        let (mu, g, b) = (params.running_mean[ch], params.gamma[ch], params.beta[ch]);
        for i in 0..n {
            for v in &mut out.data_mut()[(i * c + ch) * plane..][..plane] {
                *v = g * (*v - mu) * inv_std + b;
            }
        }
    }
    Ok(out)
}
