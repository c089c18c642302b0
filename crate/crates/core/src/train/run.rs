use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Scenario, TrainConfig};
use super::metrics::{accuracy, mean_and_std, CrossvalSummary, EpochMetrics, RunMetrics};
use super::model::{build_model, Model, DROPOUT_LAYER};
use super::sgd::Sgd;
use crate::data::{kfold_split, make_batches, Fold, LabeledDataset};
use crate::error::{bail, Result};
use crate::gate::{
    finalize_thresholds, instance_average, ClassAverageTable, ClassAverages, GateLog, GateRecord, ThresholdTable, Trigger,
};
use crate::nn::DropoutKey;
use crate::real::Real;
use crate::rng;

const EVAL_CHUNK: usize = 250;

/// Progress hooks; every method defaults to a no-op.
pub trait Observer {
    fn fold_start(&mut self, _fold: usize, _folds: usize) {}
    fn epoch_end(&mut self, _metrics: &EpochMetrics) {}
}

impl Observer for () {}

/// Seed used for everything inside fold `fold` (weights, shuffles, dropout).
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    rng::derive(seed, fold as u64)
}

/// Top-1 accuracy of `model` on `indices` in evaluation mode.
pub fn evaluate_accuracy<T: Real>(model: &Model<T>, data: &LabeledDataset<T>, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        bail!(Data, "cannot evaluate on an empty index set");
    }
    let mut predictions = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.gather(chunk)?;
        predictions.extend(model.predict(&x)?);
        labels.extend(y);
    }
    accuracy(&predictions, &labels)
}

fn limited(indices: &[usize], limit: Option<usize>) -> &[usize] {
    match limit {
        Some(n) if n < indices.len() => &indices[..n],
        _ => indices,
    }
}

/// Trains one model on `split.train` and validates on `split.validation`
/// after every epoch. Returns the trained model and its metrics.
///
/// Scenario `bn` normalizes every batch, `no_bn` never does. Scenario
/// `adaptive` trains epoch 1 unnormalized while accumulating per-class
/// instance averages, turns them into thresholds, and from epoch 2 on
/// normalizes exactly the batches the gate flags.
pub fn train_model<T: Real>(
    config: &TrainConfig,
    data: &LabeledDataset<T>,
    split: &Fold,
    observer: &mut dyn Observer,
) -> Result<(Model<T>, RunMetrics)> {
    config.validate()?;
    let train = limited(&split.train, config.train_limit);
    let val = limited(&split.validation, config.eval_limit);
    if train.is_empty() {
        bail!(Data, "empty training split");
    }
    if let Some(&bad) = train.iter().chain(val).find(|&&i| i >= data.len()) {
        bail!(Data, "split index {} out of range for {} instances", bad, data.len());
    }

    let mut model: Model<T> = build_model(config, data.sample_shape(), data.class_count)?;
    let mut opt = Sgd::new(config.learning_rate, config.sgd_momentum, &model.slot_sizes());
    let adaptive = config.scenario == Scenario::Adaptive;
    let averages: Vec<f64> = if adaptive {
        train.iter().map(|&i| instance_average(data.image(i))).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut calibration = ClassAverages::new(data.class_count);
    let mut class_averages = None;
    let mut thresholds: Option<ThresholdTable> = None;
    let mut gate_log = GateLog::default();
    let mut normalized_batches = 0u64;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step = 0u64;

    for epoch in 1..=config.epochs {
        let plan = make_batches(train.len(), config.batch_size, config.seed, epoch as u64)?;
        let (mut loss_sum, mut seen) = (0.0f64, 0usize);
        for (batch_index, positions) in plan.batches.iter().enumerate() {
            let indices: Vec<usize> = positions.iter().map(|&p| train[p]).collect();
            let normalize = match config.scenario {
                Scenario::Bn => true,
                Scenario::NoBn => false,
                Scenario::Adaptive => match &thresholds {
                    None => {
                        for &p in positions {
                            calibration.observe(data.labels[train[p]], averages[p])?;
                        }
                        false
                    }
                    Some(table) => {
                        let trigger = if config.force_gate {
                            Some(Trigger::Forced)
                        } else {
                            table.check(positions.iter().map(|&p| (averages[p], data.labels[train[p]])))?
                        };
                        gate_log.push(GateRecord::new(epoch, batch_index, trigger));
                        trigger.is_some()
                    }
                },
            };
            let (x, labels) = data.gather(&indices)?;
            let key = DropoutKey { seed: config.seed, layer: DROPOUT_LAYER, step };
            let loss = model.train_step(&x, &labels, normalize, key, &mut opt)?;
            step += 1;
            normalized_batches += normalize as u64;
            loss_sum += loss.f64() * indices.len() as f64;
            seen += indices.len();
        }
        if adaptive && thresholds.is_none() {
            let table = core::mem::replace(&mut calibration, ClassAverages::new(0)).finalize()?;
            thresholds = Some(finalize_thresholds(&table, config.upr_p, config.lor_p)?);
            class_averages = Some(table);
        }
        let metrics = EpochMetrics { epoch, mean_loss: loss_sum / seen as f64, val_accuracy: evaluate_accuracy(&model, data, val)? };
        observer.epoch_end(&metrics);
        epochs.push(metrics);
    }

    let final_accuracy = epochs.last().map(|m| m.val_accuracy).unwrap_or_default();
    let metrics = RunMetrics {
        scenario: config.scenario,
        batch_size: config.batch_size,
        train_size: train.len(),
        eval_size: val.len(),
        epochs,
        final_accuracy,
        normalized_batches,
        gate_log,
        class_averages,
        thresholds,
    };
    Ok((model, metrics))
}

/// Outcome of [`gate_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSweep {
    pub class_averages: ClassAverageTable,
    pub thresholds: ThresholdTable,
    pub gate_log: GateLog,
}

/// The adaptive gate without any training: calibrates on epoch 1 and records
/// the decision for every batch of epochs `2..=config.epochs`. Batches,
/// thresholds and decisions equal those of an adaptive [`train_model`] run
/// with the same config and split, because the gate only reads pixels.
pub fn gate_sweep<T: Real>(config: &TrainConfig, data: &LabeledDataset<T>, train: &[usize]) -> Result<GateSweep> {
    let cfg = TrainConfig { scenario: Scenario::Adaptive, ..config.clone() };
    cfg.validate()?;
    let train = limited(train, cfg.train_limit);
    if train.is_empty() {
        bail!(Data, "empty training split");
    }
    let averages: Vec<f64> = train.iter().map(|&i| instance_average(data.image(i))).collect::<Result<_>>()?;
    let mut calibration = ClassAverages::new(data.class_count);
    for positions in make_batches(train.len(), cfg.batch_size, cfg.seed, 1)?.batches {
        for p in positions {
            calibration.observe(data.labels[train[p]], averages[p])?;
        }
    }
    let class_averages = calibration.finalize()?;
    let thresholds = finalize_thresholds(&class_averages, cfg.upr_p, cfg.lor_p)?;
    let mut gate_log = GateLog::default();
    for epoch in 2..=cfg.epochs {
        let plan = make_batches(train.len(), cfg.batch_size, cfg.seed, epoch as u64)?;
        for (batch_index, positions) in plan.batches.iter().enumerate() {
            let trigger = thresholds.check(positions.iter().map(|&p| (averages[p], data.labels[train[p]])))?;
            gate_log.push(GateRecord::new(epoch, batch_index, trigger));
        }
    }
    Ok(GateSweep { class_averages, thresholds, gate_log })
}

/// [`train_model`] without the trained model.
pub fn run_training<T: Real>(
    config: &TrainConfig,
    data: &LabeledDataset<T>,
    split: &Fold,
    observer: &mut dyn Observer,
) -> Result<RunMetrics> {
    Ok(train_model(config, data, split, observer)?.1)
}

/// K-fold cross-validation: a fresh model per fold, seeded with
/// [`fold_seed`], scored by its final validation accuracy.
pub fn run_crossval<T: Real>(
    config: &TrainConfig,
    data: &LabeledDataset<T>,
    observer: &mut dyn Observer,
) -> Result<CrossvalSummary> {
    config.validate()?;
    let split = kfold_split(data.len(), config.folds, config.seed)?;
    let mut runs = Vec::with_capacity(config.folds);
    for (f, fold) in split.folds.iter().enumerate() {
        observer.fold_start(f, config.folds);
        let fold_config = TrainConfig { seed: fold_seed(config.seed, f), ..config.clone() };
        runs.push(run_training(&fold_config, data, fold, observer)?);
    }
    let fold_accuracies: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
    let (mean, std) = mean_and_std(&fold_accuracies)?;
    Ok(CrossvalSummary { fold_accuracies, mean, std, runs })
}
