//! Resolves an [`ExperimentConfig`] to an in-memory dataset.

use std::path::{Path, PathBuf};

use adabn_core::data::LabeledDataset;
use adabn_core::synthetic::gaussian_blobs;

use crate::cifar::{read_cifar_bin, CifarVariant};
use crate::config::{DatasetKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::idx::read_idx_pair;

const SYNTHETIC_SIZE: usize = 600;
const SYNTHETIC_CLASSES: usize = 3;
const SYNTHETIC_SIDE: usize = 28;

/// First candidate that exists, else the first (so the error names it).
fn pick(dir: &Path, names: &[&str]) -> PathBuf {
    names.iter().map(|n| dir.join(n)).find(|p| p.exists()).unwrap_or_else(|| dir.join(names[0]))
}

fn idx_paths(cfg: &ExperimentConfig) -> (PathBuf, PathBuf) {
    let dir = cfg.data_dir();
    let images = cfg.images.clone().unwrap_or_else(|| pick(&dir, &["images-idx3-ubyte", "train-images-idx3-ubyte"]));
    let labels = cfg.labels.clone().unwrap_or_else(|| pick(&dir, &["labels-idx1-ubyte", "train-labels-idx1-ubyte"]));
    (images, labels)
}

fn cifar_paths(cfg: &ExperimentConfig, variant: CifarVariant) -> Vec<PathBuf> {
    if !cfg.cifar_files.is_empty() {
        return cfg.cifar_files.clone();
    }
    let dir = cfg.data_dir();
    match variant {
        CifarVariant::Cifar10 => (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
        CifarVariant::Cifar100 => vec![dir.join("train.bin")],
    }
}

/// Loads the configured dataset and keeps its first `subset_size` records.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let mut data = match cfg.dataset {
        DatasetKind::Mnist | DatasetKind::Fashion => {
            let (images, labels) = idx_paths(cfg);
            let mut d = read_idx_pair(&images, &labels)?;
            if d.class_count > 10 {
                return Err(Error::Format { path: labels, reason: format!("label {} exceeds 10 classes", d.class_count - 1) });
            }
            d.class_count = 10;
            d.name = cfg.dataset.to_string();
            d
        }
        DatasetKind::Cifar10 => read_cifar_bin(&cifar_paths(cfg, CifarVariant::Cifar10), CifarVariant::Cifar10)?,
        DatasetKind::Cifar100 => read_cifar_bin(&cifar_paths(cfg, CifarVariant::Cifar100), CifarVariant::Cifar100)?,
        DatasetKind::Synthetic => {
            let n = cfg.subset_size.unwrap_or(SYNTHETIC_SIZE);
            gaussian_blobs(n, SYNTHETIC_CLASSES, SYNTHETIC_SIDE, cfg.train.seed)?
        }
    };
    if let Some(n) = cfg.subset_size {
        data = data.truncate(n)?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_respects_subset() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["dataset=synthetic", "subset_size=30"]).unwrap();
        let d = load_dataset(&cfg).unwrap();
        assert_eq!((d.len(), d.class_count), (30, 3));
    }

    #[test]
    fn missing_files_name_the_path() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["data_dir=/nonexistent/mnist"]).unwrap();
        let msg = load_dataset(&cfg).unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/mnist/images-idx3-ubyte"), "{msg}");
        cfg.apply_overrides(&["dataset=cifar10"]).unwrap();
        let msg = load_dataset(&cfg).unwrap_err().to_string();
        assert!(msg.contains("data_batch_1.bin"), "{msg}");
    }
}
