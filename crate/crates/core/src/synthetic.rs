//! Seeded synthetic image sets for tests and smoke runs.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{bail, Result};
use crate::rng;
use crate::tensor::Tensor;

/// `n` single-channel `size×size` images, each a Gaussian blob whose centre
/// depends on the class (evenly spaced on a circle around the image centre),
/// with jittered position, amplitude and additive noise. Labels cycle
/// `0, 1, …, classes − 1`.
pub fn gaussian_blobs(n: usize, classes: usize, size: usize, seed: u64) -> Result<LabeledDataset<f32>> {
    if classes < 2 || n < classes || size < 4 {
        bail!(Param, "need classes >= 2, n >= classes and size >= 4 (got {}, {}, {})", classes, n, size);
    }
    let mut draws = rng::stream(seed, rng::DOMAIN_SYNTH, 0);
    let mid = (size as f64 - 1.0) / 2.0;
    let radius = size as f64 / 4.0;
    let sigma = size as f64 / 8.0;
    let mut pixels = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let angle = core::f64::consts::TAU * class as f64 / classes as f64;
        let cy = mid + radius * Float::sin(angle) + draws.gen_range(-1.0..1.0);
        let cx = mid + radius * Float::cos(angle) + draws.gen_range(-1.0..1.0);
        let amp = draws.gen_range(0.6..1.0);
        for y in 0..size {
            for x in 0..size {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let v = amp * Float::exp(-d2 / (2.0 * sigma * sigma)) + draws.gen_range(0.0..0.1);
                pixels.push(v.clamp(0.0, 1.0) as f32);
            }
        }
        labels.push(class);
    }
    let images = Tensor::new(&[n, 1, size, size], pixels)?;
    LabeledDataset::new(images, labels, classes, "synthetic-blobs")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_in_range() {
        let a = gaussian_blobs(20, 2, 24, 1).unwrap();
        let b = gaussian_blobs(20, 2, 24, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_histogram(), alloc::vec![10, 10]);
        assert!(a.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
