use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::config::Scenario;
use crate::error::{bail, Result};
use crate::gate::{ClassAverageTable, GateLog, ThresholdTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Instance-weighted mean training loss.
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: Scenario,
    pub batch_size: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub epochs: Vec<EpochMetrics>,
    pub final_accuracy: f64,
    /// Batches that went through the normalization site.
    pub normalized_batches: u64,
    pub gate_log: GateLog,
    pub class_averages: Option<ClassAverageTable>,
    pub thresholds: Option<ThresholdTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalSummary {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divide by K).
    pub std: f64,
    pub runs: Vec<RunMetrics>,
}

/// Top-1 accuracy, `correct / total`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        bail!(Shape, "{} predictions for {} labels", predictions.len(), labels.len());
    }
    if labels.is_empty() {
        bail!(Data, "accuracy of an empty set");
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        bail!(Data, "no values");
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, Float::sqrt(var)))
}
