use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AdaptiveEval, Scenario, TrainConfig};
use super::sgd::Sgd;
use crate::batchnorm::{bn_backward, bn_forward_eval, bn_forward_train, BatchNormParams, BnCache};
use crate::error::{bail, Result};
use crate::nn::conv::conv2d_backward;
use crate::nn::{self, ConvCache, ConvParams, DenseCache, DenseParams, DropoutKey, Mode, PoolCache, ReluCache};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;

const KERNEL: usize = 3;
const POOL: usize = 2;
/// Layer id in the dropout keys drawn by the training loop.
pub const DROPOUT_LAYER: u64 = 1;

/// Output shape of one stage of the network, excluding the batch axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub layer: String,
    pub shape: Vec<usize>,
}

fn stage(layer: &str, shape: &[usize]) -> LayerShape {
    LayerShape { layer: layer.into(), shape: shape.to_vec() }
}

/// Walks the architecture
/// `[norm] → (conv 3×3 → relu → maxpool 2×2) ×3 → flatten → dropout → dense`
/// and returns every stage's output shape.
pub fn shape_chain(input: [usize; 3], filters: [usize; 3], classes: usize, with_norm: bool) -> Result<Vec<LayerShape>> {
    let [mut c, mut h, mut w] = input;
    if c == 0 || h == 0 || w == 0 || classes == 0 {
        bail!(Shape, "input {:?} and class count {} must be positive", input, classes);
    }
    let mut chain = alloc::vec![stage("input", &[c, h, w])];
    if with_norm {
        chain.push(stage("batchnorm", &[c, h, w]));
    }
    for (i, &f) in filters.iter().enumerate() {
        if h < KERNEL || w < KERNEL {
            bail!(Shape, "input {:?} too small: conv{} sees {}x{}", input, i + 1, h, w);
        }
        (c, h, w) = (f, h - KERNEL + 1, w - KERNEL + 1);
        chain.push(stage(&alloc::format!("conv{}+relu", i + 1), &[c, h, w]));
        if h < POOL || w < POOL {
            bail!(Shape, "input {:?} too small: pool{} sees {}x{}", input, i + 1, h, w);
        }
        (h, w) = (h / POOL, w / POOL);
        chain.push(stage(&alloc::format!("pool{}", i + 1), &[c, h, w]));
    }
    let flat = c * h * w;
    chain.push(stage("flatten", &[flat]));
    chain.push(stage("dropout", &[flat]));
    chain.push(stage("dense+softmax", &[classes]));
    Ok(chain)
}

/// The network together with its optional input normalization site.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub scenario: Scenario,
    pub input_shape: [usize; 3],
    pub classes: usize,
    pub norm: Option<BatchNormParams<T>>,
    pub convs: Vec<ConvParams<T>>,
    pub dense: DenseParams<T>,
    pub dropout_rate: f64,
    pub adaptive_eval: AdaptiveEval,
}

pub struct ForwardCache<T = f32> {
    norm: Option<BnCache<T>>,
    convs: Vec<(ConvCache<T>, ReluCache, PoolCache)>,
    pooled_shape: Vec<usize>,
    drop_mask: Tensor<T>,
    dense: DenseCache<T>,
}

/// Gradients in the slot order of [`Model::slots_mut`]; the normalization
/// slots are `None` when the batch bypassed the site.
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    pub layers: Vec<Tensor<T>>,
    pub norm: Option<(Vec<T>, Vec<T>)>,
}

fn kaiming_uniform<T: Real>(shape: &[usize], fan_in: usize, seed: u64, layer: u64) -> Result<Tensor<T>> {
    let bound = Float::sqrt(6.0 / fan_in as f64);
    let mut draws = rng::stream(seed, rng::DOMAIN_INIT, layer);
    Tensor::from_fn(shape, |_| T::of(draws.gen_range(-bound..bound)))
}

/// Builds the network for `[C, H, W]` inputs. Weights are Kaiming-uniform
/// (fan-in) from `config.seed`, biases zero, `γ = 1`, `β = 0`. The weights
/// do not depend on the scenario.
pub fn build_model<T: Real>(config: &TrainConfig, input: [usize; 3], classes: usize) -> Result<Model<T>> {
    let with_norm = config.scenario != Scenario::NoBn;
    let chain = shape_chain(input, config.conv_filters, classes, with_norm)?;
    let mut in_c = input[0];
    let mut convs = Vec::with_capacity(3);
    for (i, &f) in config.conv_filters.iter().enumerate() {
        let fan_in = in_c * KERNEL * KERNEL;
        let kernels = kaiming_uniform(&[f, in_c, KERNEL, KERNEL], fan_in, config.seed, i as u64)?;
        convs.push(ConvParams::new(kernels, Tensor::zeros(&[f])?, 1, 0)?);
        in_c = f;
    }
    let flat = chain[chain.len() - 2].shape[0];
    let weights = kaiming_uniform(&[flat, classes], flat, config.seed, 3)?;
    let dense = DenseParams::new(weights, Tensor::zeros(&[classes])?)?;
    Ok(Model {
        scenario: config.scenario,
        input_shape: input,
        classes,
        norm: with_norm.then(|| BatchNormParams::new(input[0])),
        convs,
        dense,
        dropout_rate: config.dropout_rate,
        adaptive_eval: config.adaptive_eval,
    })
}

impl<T: Real> Model<T> {
    /// Parameter slots: (kernels, bias) per conv, dense (weights, bias), then
    /// (γ, β) when a normalization site exists.
    pub fn slot_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.convs.iter().flat_map(|c| [c.kernels.len(), c.bias.len()]).collect();
        sizes.extend([self.dense.weights.len(), self.dense.bias.len()]);
        if let Some(bn) = &self.norm {
            sizes.extend([bn.gamma.len(), bn.beta.len()]);
        }
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.slot_sizes().iter().sum()
    }

    pub fn slots_mut(&mut self) -> Vec<&mut [T]> {
        let mut slots: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            slots.push(c.kernels.data_mut());
            slots.push(c.bias.data_mut());
        }
        slots.push(self.dense.weights.data_mut());
        slots.push(self.dense.bias.data_mut());
        if let Some(bn) = &mut self.norm {
            slots.push(&mut bn.gamma);
            slots.push(&mut bn.beta);
        }
        slots
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = x.dims4()?;
        if [c, h, w] != self.input_shape {
            bail!(Shape, "batch instances are {:?}, model expects {:?}", [c, h, w], self.input_shape);
        }
        Ok(())
    }

    /// Training-mode forward. `normalize` routes the batch through the
    /// normalization site (batch statistics, running averages updated).
    pub fn forward_train(&mut self, x: &Tensor<T>, normalize: bool, key: DropoutKey) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let (mut act, norm) = if normalize {
            let Some(bn) = self.norm.as_mut() else {
                bail!(State, "scenario {} has no normalization site", self.scenario);
            };
            let (y, cache) = bn_forward_train(x, bn)?;
            (y, Some(cache))
        } else {
            (x.clone(), None)
        };
        let mut convs = Vec::with_capacity(self.convs.len());
        for p in &self.convs {
            let (y, cc) = nn::conv2d(&act, p)?;
            let (r, rc) = nn::relu(&y);
            let (q, pc) = nn::maxpool2d(&r, POOL)?;
            convs.push((cc, rc, pc));
            act = q;
        }
        let pooled_shape = act.shape().to_vec();
        let n = pooled_shape[0];
        let flat = act.reshape(&[n, pooled_shape[1..].iter().product()])?;
        let (dropped, drop_mask) = nn::dropout(&flat, self.dropout_rate, key, Mode::Train)?;
        let (logits, dense) = nn::dense_affine(&dropped, &self.dense)?;
        Ok((logits, ForwardCache { norm, convs, pooled_shape, drop_mask, dense }))
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let gd = nn::dense_grad(&cache.dense, grad_logits, &self.dense)?;
        let g = nn::dropout_grad(&cache.drop_mask, self.dropout_rate, &gd.input)?;
        let mut g = g.reshape(&cache.pooled_shape)?;
        let mut conv_grads = Vec::with_capacity(self.convs.len());
        for (i, (p, (cc, rc, pc))) in self.convs.iter().zip(&cache.convs).enumerate().rev() {
            let gr = nn::maxpool2d_grad(pc, &g)?;
            let gy = nn::relu_grad(rc, &gr)?;
            let need_input = i > 0 || cache.norm.is_some();
            let (gi, gk, gb) = conv2d_backward(cc, &gy, p, need_input)?;
            conv_grads.push((gk, gb));
            if let Some(gi) = gi {
                g = gi;
            }
        }
        conv_grads.reverse();
        let mut layers: Vec<Tensor<T>> = conv_grads.into_iter().flat_map(|(k, b)| [k, b]).collect();
        layers.push(gd.weights);
        layers.push(gd.bias);
        let norm = match (&cache.norm, &self.norm) {
            (Some(bc), Some(bn)) => {
                let gb = bn_backward(bc, &g, bn)?;
                Some((gb.gamma, gb.beta))
            }
            _ => None,
        };
        Ok(Gradients { layers, norm })
    }

    /// One SGD step on a batch; returns the batch's mean loss. Normalization
    /// parameters only move on batches that went through the site.
    pub fn train_step(
        &mut self,
        x: &Tensor<T>,
        labels: &[usize],
        normalize: bool,
        key: DropoutKey,
        opt: &mut Sgd<T>,
    ) -> Result<T> {
        let (logits, cache) = self.forward_train(x, normalize, key)?;
        let loss = nn::softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&cache, &loss.grad_logits)?;
        let mut slots = self.slots_mut();
        let n_layers = grads.layers.len();
        for (i, g) in grads.layers.iter().enumerate() {
            opt.step(i, slots[i], g.data())?;
        }
        if let Some((gg, gb)) = &grads.norm {
            opt.step(n_layers, slots[n_layers], gg)?;
            let s = &mut slots[n_layers + 1];
            opt.step(n_layers + 1, s, gb)?;
        }
        if !loss.loss.is_finite() {
            bail!(Numeric, "training loss became non-finite");
        }
        Ok(loss.loss)
    }

    /// Evaluation-mode logits. Dropout is the identity. The BN scenario
    /// normalizes with running statistics; the adaptive site does so too
    /// under [`AdaptiveEval::RunningStats`] once the gate has fired, and is
    /// the identity otherwise.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let site = match (self.scenario, &self.norm) {
            (Scenario::Bn, Some(bn)) => Some(bn),
            (Scenario::Adaptive, Some(bn)) if self.adaptive_eval == AdaptiveEval::RunningStats && bn.batches_seen > 0 => Some(bn),
            _ => None,
        };
        let mut act = match site {
            Some(bn) => bn_forward_eval(x, bn)?,
            None => x.clone(),
        };
        for p in &self.convs {
            let (y, _) = nn::conv2d(&act, p)?;
            let (r, _) = nn::relu(&y);
            act = nn::maxpool2d(&r, POOL)?.0;
        }
        let n = act.shape()[0];
        let flat_len = act.len() / n;
        let flat = act.reshape(&[n, flat_len])?;
        Ok(nn::dense_affine(&flat, &self.dense)?.0)
    }

    /// Arg-max class per row, ties to the lowest index.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward_eval(x)?;
        Ok(logits
            .data()
            .chunks_exact(self.classes)
            .map(|row| {
                row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best })
            })
            .collect())
    }
}
