use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;

/// Momentum SGD on one parameter slice: `v ← momentum·v + grad`,
/// `θ ← θ − lr·v`.
pub fn sgd_update<T: Real>(params: &mut [T], grads: &[T], lr: T, momentum: T, velocity: &mut [T]) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        bail!(
            Shape,
            "sgd slices differ: params {}, grads {}, velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        );
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD with one velocity buffer per parameter slot.
#[derive(Debug, Clone)]
pub struct Sgd<T = f32> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64, slot_sizes: &[usize]) -> Self {
        Sgd {
            learning_rate: T::of(learning_rate),
            momentum: T::of(momentum),
            velocity: slot_sizes.iter().map(|&n| alloc::vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, slot: usize, params: &mut [T], grads: &[T]) -> Result<()> {
        let Some(v) = self.velocity.get_mut(slot) else {
            bail!(Shape, "no velocity slot {}", slot);
        };
        sgd_update(params, grads, self.learning_rate, self.momentum, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_grad_decays_velocity() {
        let mut p = vec![1.0f64, -2.0];
        let mut v = vec![0.5, 1.0];
        sgd_update(&mut p, &[0.0, 0.0], 0.1, 0.9, &mut v).unwrap();
        assert_eq!(v, vec![0.45, 0.9]);
        assert!((p[0] - (1.0 - 0.045)).abs() < 1e-15);
        let mut p = vec![1.0f64, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_update(&mut p, &[0.0, 0.0], 0.1, 0.9, &mut v).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = vec![1.0f64, 2.0];
        let mut v = vec![0.0, 0.0];
        sgd_update(&mut p, &[0.5, -1.0], 0.1, 0.0, &mut v).unwrap();
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, 2.0 + 0.1]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(θ) = ½|θ|², grad = θ
        let mut p = vec![3.0f64, -4.0, 1.0];
        let mut v = vec![0.0; 3];
        let mut norms = Vec::new();
        for _ in 0..100 {
            let g = p.clone();
            sgd_update(&mut p, &g, 0.1, 0.0, &mut v).unwrap();
            norms.push(p.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        assert!(norms[3..].windows(2).all(|w| w[1] < w[0]));
        assert!(norms[99] < 1e-3);
    }

    #[test]
    fn mismatched_lengths() {
        let mut p = vec![1.0f32];
        let mut v = vec![0.0, 0.0];
        assert!(sgd_update(&mut p, &[1.0], 0.1, 0.9, &mut v).is_err());
    }
}
