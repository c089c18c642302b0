use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Address of one dropout mask: the same key always yields the same mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub layer: u64,
    pub step: u64,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        bail!(Param, "dropout rate must be in [0, 1), got {}", rate);
    }
    Ok(())
}

/// Inverted dropout. In training mode each element survives with probability
/// `1 - rate` and survivors are scaled by `1 / (1 - rate)`; evaluation mode is
/// the identity. Returns the output and the 0/1 keep mask.
pub fn dropout<T: Real>(input: &Tensor<T>, rate: f64, key: DropoutKey, mode: Mode) -> Result<(Tensor<T>, Tensor<T>)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), Tensor::full(input.shape(), T::one())?));
    }
    let mut draws = rng::stream(rng::derive(key.seed, key.layer), rng::DOMAIN_DROPOUT, key.step);
    let scale = T::of(1.0 / (1.0 - rate));
    let keep: Vec<T> = (0..input.len())
        .map(|_| if draws.gen::<f64>() < rate { T::zero() } else { T::one() })
        .collect();
    let out = input.data().iter().zip(&keep).map(|(&x, &m)| x * m * scale).collect();
    Ok((Tensor::new(input.shape(), out)?, Tensor::new(input.shape(), keep)?))
}

pub fn dropout_grad<T: Real>(mask: &Tensor<T>, rate: f64, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if mask.shape() != grad_out.shape() {
        bail!(Shape, "dropout grad {:?} does not match mask {:?}", grad_out.shape(), mask.shape());
    }
    let scale = T::of(1.0 / (1.0 - rate));
    let g = grad_out.data().iter().zip(mask.data()).map(|(&g, &m)| g * m * scale).collect();
    Tensor::new(grad_out.shape(), g)
}
