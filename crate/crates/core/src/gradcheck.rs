//! Central finite-difference verification of analytic gradients, plus a
//! suite that checks every layer of the network at random points.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batchnorm::{bn_backward, bn_normalize, BatchNormParams};
use crate::error::{bail, Result};
use crate::nn::{self, ConvParams, DenseParams, DropoutKey, Mode};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares `analytic` against the central difference `(f(x+h) − f(x−h)) / 2h`
/// at every coordinate of `point` and returns the largest relative error
/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn finite_difference_check<F>(mut f: F, point: &Tensor<f64>, analytic: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if analytic.shape() != point.shape() {
        bail!(Shape, "analytic gradient {:?} does not match point {:?}", analytic.shape(), point.shape());
    }
    if !(h > 0.0) {
        bail!(Param, "finite-difference step must be positive, got {}", h);
    }
    let mut probe = point.clone();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = x0 - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = x0;
        if !up.is_finite() || !down.is_finite() {
            bail!(Numeric, "objective is not finite around coordinate {}", i);
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Outcome of checking one gradient of one layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub points: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Tolerance for layers whose map is smooth at the checked points.
pub const SMOOTH_TOLERANCE: f64 = 1e-6;
/// Tolerance for layers with kinks (max pooling).
pub const KINKED_TOLERANCE: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<f64>> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// `Σ w ⊙ y`, the scalar used to reduce a layer output to one value.
fn project(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Values spaced at least `gap` apart in random order, so every pooling window
/// has a strict maximum and no ReLU input sits near its kink.
fn spaced(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Result<Tensor<f64>> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0 + 0.5) * gap).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    Tensor::new(shape, vals)
}

/// Runs every layer's backward pass against central differences at `points`
/// random points each, in `f64`, with step `h`.
pub fn layer_suite(seed: u64, points: usize, h: f64) -> Result<Vec<LayerCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 12];

    for _ in 0..points {
        // conv: input, kernels, bias
        let x = uniform(&mut rng, &[2, 2, 5, 5], -1.0, 1.0)?;
        let k = uniform(&mut rng, &[3, 2, 3, 3], -1.0, 1.0)?;
        let b = uniform(&mut rng, &[3], -1.0, 1.0)?;
        let p = ConvParams::new(k.clone(), b.clone(), 1, 1)?;
        let (y, cache) = nn::conv2d(&x, &p)?;
        let w = uniform(&mut rng, y.shape(), -1.0, 1.0)?;
        let g = nn::conv2d_grad(&cache, &w, &p)?;
        let obj_x = |t: &Tensor<f64>| Ok(project(&nn::conv2d(t, &p)?.0, &w));
        worst[0] = worst[0].max(finite_difference_check(obj_x, &x, &g.input, h)?);
        let obj_k = |t: &Tensor<f64>| Ok(project(&nn::conv2d(&x, &ConvParams::new(t.clone(), b.clone(), 1, 1)?)?.0, &w));
        worst[1] = worst[1].max(finite_difference_check(obj_k, &k, &g.kernels, h)?);
        let obj_b = |t: &Tensor<f64>| Ok(project(&nn::conv2d(&x, &ConvParams::new(k.clone(), t.clone(), 1, 1)?)?.0, &w));
        worst[2] = worst[2].max(finite_difference_check(obj_b, &b, &g.bias, h)?);

        // max pool with strict window maxima
        let x = spaced(&mut rng, &[2, 2, 4, 6], 0.05)?;
        let (y, cache) = nn::maxpool2d(&x, 2)?;
        let w = uniform(&mut rng, y.shape(), -1.0, 1.0)?;
        let g = nn::maxpool2d_grad(&cache, &w)?;
        let obj = |t: &Tensor<f64>| Ok(project(&nn::maxpool2d(t, 2)?.0, &w));
        worst[3] = worst[3].max(finite_difference_check(obj, &x, &g, h)?);

        // dense: input, weights, bias
        let x = uniform(&mut rng, &[3, 6], -1.0, 1.0)?;
        let wt = uniform(&mut rng, &[6, 4], -1.0, 1.0)?;
        let bt = uniform(&mut rng, &[4], -1.0, 1.0)?;
        let p = DenseParams::new(wt.clone(), bt.clone())?;
        let (y, cache) = nn::dense_affine(&x, &p)?;
        let w = uniform(&mut rng, y.shape(), -1.0, 1.0)?;
        let g = nn::dense_grad(&cache, &w, &p)?;
        let obj_x = |t: &Tensor<f64>| Ok(project(&nn::dense_affine(t, &p)?.0, &w));
        worst[4] = worst[4].max(finite_difference_check(obj_x, &x, &g.input, h)?);
        let obj_w = |t: &Tensor<f64>| Ok(project(&nn::dense_affine(&x, &DenseParams::new(t.clone(), bt.clone())?)?.0, &w));
        worst[5] = worst[5].max(finite_difference_check(obj_w, &wt, &g.weights, h)?);
        let obj_b = |t: &Tensor<f64>| Ok(project(&nn::dense_affine(&x, &DenseParams::new(wt.clone(), t.clone())?)?.0, &w));
        worst[6] = worst[6].max(finite_difference_check(obj_b, &bt, &g.bias, h)?);

        // relu away from the kink
        let x = spaced(&mut rng, &[4, 10], 0.25)?;
        let (y, cache) = nn::relu(&x);
        let w = uniform(&mut rng, y.shape(), -1.0, 1.0)?;
        let g = nn::relu_grad(&cache, &w)?;
        let obj = |t: &Tensor<f64>| Ok(project(&nn::relu(t).0, &w));
        worst[7] = worst[7].max(finite_difference_check(obj, &x, &g, h)?);

        // softmax cross-entropy
        let z = uniform(&mut rng, &[4, 5], -3.0, 3.0)?;
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..5)).collect();
        let out = nn::softmax_cross_entropy(&z, &labels)?;
        let obj = |t: &Tensor<f64>| Ok(nn::softmax_cross_entropy(t, &labels)?.loss);
        worst[8] = worst[8].max(finite_difference_check(obj, &z, &out.grad_logits, h)?);

        // batch norm (training map): input, gamma, beta
        let x = uniform(&mut rng, &[4, 2, 3, 3], -2.0, 2.0)?;
        let mut bn = BatchNormParams::<f64>::new(2);
        bn.gamma = (0..2).map(|_| rng.gen_range(0.5..1.5)).collect();
        bn.beta = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (y, cache) = bn_normalize(&x, &bn)?;
        let w = uniform(&mut rng, y.shape(), -1.0, 1.0)?;
        let g = bn_backward(&cache, &w, &bn)?;
        let obj_x = |t: &Tensor<f64>| Ok(project(&bn_normalize(t, &bn)?.0, &w));
        worst[9] = worst[9].max(finite_difference_check(obj_x, &x, &g.input, h)?);
        let gamma = Tensor::new(&[2], bn.gamma.clone())?;
        let obj_g = |t: &Tensor<f64>| {
            let mut q = bn.clone();
            q.gamma = t.data().to_vec();
            Ok(project(&bn_normalize(&x, &q)?.0, &w))
        };
        worst[10] = worst[10].max(finite_difference_check(obj_g, &gamma, &Tensor::new(&[2], g.gamma.clone())?, h)?);
        let beta = Tensor::new(&[2], bn.beta.clone())?;
        let obj_b = |t: &Tensor<f64>| {
            let mut q = bn.clone();
            q.beta = t.data().to_vec();
            Ok(project(&bn_normalize(&x, &q)?.0, &w))
        };
        worst[11] = worst[11].max(finite_difference_check(obj_b, &beta, &Tensor::new(&[2], g.beta.clone())?, h)?);
    }

    let names: [(&'static str, f64); 12] = [
        ("conv2d/input", SMOOTH_TOLERANCE),
        ("conv2d/kernels", SMOOTH_TOLERANCE),
        ("conv2d/bias", SMOOTH_TOLERANCE),
        ("maxpool2d/input", KINKED_TOLERANCE),
        ("dense/input", SMOOTH_TOLERANCE),
        ("dense/weights", SMOOTH_TOLERANCE),
        ("dense/bias", SMOOTH_TOLERANCE),
        ("relu/input", SMOOTH_TOLERANCE),
        ("softmax_cross_entropy/logits", SMOOTH_TOLERANCE),
        ("batchnorm/input", SMOOTH_TOLERANCE),
        ("batchnorm/gamma", SMOOTH_TOLERANCE),
        ("batchnorm/beta", SMOOTH_TOLERANCE),
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(&(layer, tolerance), worst)| LayerCheck { layer, points, worst, tolerance })
        .collect())
}

/// Gradient check of a small composed network
/// `conv → relu → flatten → dense → softmax cross-entropy` with respect to
/// its input and the conv kernels. Returns the larger of the two errors.
pub fn composed_network_check(seed: u64, h: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[3, 1, 6, 6], -1.0, 1.0)?;
    let k = uniform(&mut rng, &[2, 1, 3, 3], -0.5, 0.5)?;
    let cb = uniform(&mut rng, &[2], -0.1, 0.1)?;
    let dense = DenseParams::new(uniform(&mut rng, &[32, 4], -0.5, 0.5)?, uniform(&mut rng, &[4], -0.1, 0.1)?)?;
    let labels = [0usize, 3, 1];
    let key = DropoutKey { seed, layer: 0, step: 0 };

    let forward = |x: &Tensor<f64>, k: &Tensor<f64>| -> Result<f64> {
        let conv = ConvParams::new(k.clone(), cb.clone(), 1, 0)?;
        let (y, _) = nn::conv2d(x, &conv)?;
        let (r, _) = nn::relu(&y);
        let (d, _) = nn::dropout(&r, 0.0, key, Mode::Train)?;
        let flat = d.reshape(&[3, 32])?;
        let (z, _) = nn::dense_affine(&flat, &dense)?;
        Ok(nn::softmax_cross_entropy(&z, &labels)?.loss)
    };

    let conv = ConvParams::new(k.clone(), cb.clone(), 1, 0)?;
    let (y, c_cache) = nn::conv2d(&x, &conv)?;
    let (r, r_cache) = nn::relu(&y);
    let flat = r.reshape(&[3, 32])?;
    let (z, d_cache) = nn::dense_affine(&flat, &dense)?;
    let loss = nn::softmax_cross_entropy(&z, &labels)?;
    let g_dense = nn::dense_grad(&d_cache, &loss.grad_logits, &dense)?;
    let g_r = g_dense.input.reshape(&[3, 2, 4, 4])?;
    let g_y = nn::relu_grad(&r_cache, &g_r)?;
    let g_conv = nn::conv2d_grad(&c_cache, &g_y, &conv)?;

    let ex = finite_difference_check(|t| forward(t, &k), &x, &g_conv.input, h)?;
    let ek = finite_difference_check(|t| forward(&x, t), &k, &g_conv.kernels, h)?;
    Ok(ex.max(ek))
}
