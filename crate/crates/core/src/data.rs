//! In-memory labeled datasets, seeded batch plans and K-fold splits.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;

/// Images `[N, C, H, W]` with values in `[0, 1]` and their class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T = f32> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub name: String,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, class_count: usize, name: impl Into<String>) -> Result<Self> {
        let [n, _, _, _] = images.dims4()?;
        if labels.len() != n {
            bail!(Data, "{} images but {} labels", n, labels.len());
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            bail!(Data, "label {} out of range for {} classes", bad, class_count);
        }
        if images.data().iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            bail!(Data, "pixel values must lie in [0, 1]");
        }
        Ok(LabeledDataset { images, labels, class_count, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]` of one instance.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image(&self, i: usize) -> &[T] {
        self.images.outer(i)
    }

    /// Stacks the given instances into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let [c, h, w] = self.sample_shape();
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                bail!(Data, "index {} out of range for {} instances", i, self.len());
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(&[indices.len(), c, h, w], data)?, labels))
    }

    /// The first `n` instances (all of them when `n >= len`).
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = (0..n).collect();
        let (images, labels) = self.gather(&idx)?;
        Ok(LabeledDataset { images, labels, class_count: self.class_count, name: self.name.clone() })
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = alloc::vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Ordered batches of positions `0..n` for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
    pub batches: Vec<Vec<usize>>,
}

/// Uniform shuffle of `0..n` keyed by `(seed, epoch)`, cut into consecutive
/// batches of `batch_size`; a short final batch is kept.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<BatchPlan> {
    if batch_size == 0 {
        bail!(Param, "batch size must be positive");
    }
    if n == 0 {
        bail!(Param, "cannot batch an empty index set");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::DOMAIN_SHUFFLE, epoch));
    let batches = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    Ok(BatchPlan { seed, batch_size, batches })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
}

/// Seeded shuffle of `0..n` cut into `k` contiguous validation slices; the
/// first `n mod k` slices take one extra index. Each fold trains on the
/// complement of its slice.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        bail!(Param, "need at least 2 folds, got {}", k);
    }
    if n < k {
        bail!(Param, "{} instances cannot fill {} folds", n, k);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::DOMAIN_FOLDS, 0));
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }
    let folds = (0..k)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let mut train = Vec::with_capacity(n - (hi - lo));
            train.extend_from_slice(&order[..lo]);
            train.extend_from_slice(&order[hi..]);
            Fold { train, validation: order[lo..hi].to_vec() }
        })
        .collect();
    Ok(FoldSplit { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn batch_sizes_keep_partial_tail() {
        let plan = make_batches(10, 4, 1, 0).unwrap();
        let sizes: Vec<usize> = plan.batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn plans_are_reproducible_and_epoch_keyed() {
        assert_eq!(make_batches(50, 8, 3, 1).unwrap(), make_batches(50, 8, 3, 1).unwrap());
        assert_ne!(make_batches(50, 8, 3, 1).unwrap(), make_batches(50, 8, 3, 2).unwrap());
    }

    #[test]
    fn shuffle_positions_are_uniform() {
        // counts[i][p]: how often element i lands at position p.
        let (n, trials) = (52usize, 1000u64);
        let mut counts = vec![vec![0u32; n]; n];
        for t in 0..trials {
            let plan = make_batches(n, n, 77, t).unwrap();
            for (p, &i) in plan.batches[0].iter().enumerate() {
                counts[i][p] += 1;
            }
        }
        let expect = trials as f64 / n as f64;
        let sd = (trials as f64 * (1.0 / n as f64) * (1.0 - 1.0 / n as f64)).sqrt();
        let mut outside = 0;
        for row in &counts {
            for &c in row {
                if (c as f64 - expect).abs() > 3.0 * sd {
                    outside += 1;
                }
            }
        }
        // 2704 cells; about 0.3% of them may exceed 3 sigma by chance.
        assert!(outside <= 25, "{outside} cells outside 3 sigma");
        let chi2: f64 = counts.iter().flatten().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let dof = (n * n) as f64;
        assert!((chi2 - dof).abs() < 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
    }

    #[test]
    fn folds_of_nine() {
        let split = kfold_split(9, 3, 5).unwrap();
        let sizes: Vec<usize> = split.folds.iter().map(|f| f.validation.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3]);
    }

    #[test]
    fn folds_of_ten() {
        let split = kfold_split(10, 3, 5).unwrap();
        let mut sizes: Vec<usize> = split.folds.iter().map(|f| f.validation.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn fold_parameters_checked() {
        assert!(matches!(kfold_split(2, 3, 0), Err(crate::Error::Param(_))));
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(make_batches(5, 0, 0, 0).is_err());
    }

    #[test]
    fn dataset_validation() {
        let images = Tensor::<f32>::full(&[2, 1, 2, 2], 0.5).unwrap();
        assert!(LabeledDataset::new(images.clone(), vec![0, 1], 2, "ok").is_ok());
        assert!(LabeledDataset::new(images.clone(), vec![0, 2], 2, "bad label").is_err());
        assert!(LabeledDataset::new(images.clone(), vec![0], 2, "short").is_err());
        let hot = Tensor::<f32>::full(&[1, 1, 2, 2], 1.5).unwrap();
        assert!(LabeledDataset::new(hot, vec![0], 1, "range").is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 2usize..200, k in 2usize..8, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let split = kfold_split(n, k, seed).unwrap();
            let mut seen = vec![0u8; n];
            for fold in &split.folds {
                let size = fold.validation.len();
                prop_assert!(size == n / k || size == n / k + 1);
                prop_assert_eq!(fold.train.len() + size, n);
                let mut in_fold = vec![false; n];
                for &i in &fold.validation {
                    seen[i] += 1;
                    in_fold[i] = true;
                }
                for &i in &fold.train {
                    prop_assert!(!in_fold[i]);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn plans_are_permutations(n in 1usize..300, b in 1usize..40, seed in any::<u64>()) {
            let plan = make_batches(n, b, seed, 0).unwrap();
            let mut all: Vec<usize> = plan.batches.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let last = plan.batches.len() - 1;
            for (i, batch) in plan.batches.iter().enumerate() {
                prop_assert!(batch.len() == b || (i == last && batch.len() <= b));
            }
        }
    }
}
