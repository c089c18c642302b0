//! Adaptive batch-normalization gate.
//!
//! During the first epoch every training instance contributes its average
//! feature value (the mean over all channels and pixels) to a per-class
//! running mean. Each class mean `Ā` is then widened into the interval
//! `[Ā − Ā·lor_p, Ā + Ā·upr_p]`. From the second epoch on, a batch is
//! normalized iff at least one of its instances has an average strictly
//! outside the interval of its own class.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::real::Real;

pub const DEFAULT_UPR_P: f64 = 0.10;
pub const DEFAULT_LOR_P: f64 = 0.10;

/// Mean of all feature values of one instance.
pub fn instance_average<T: Real>(image: &[T]) -> Result<f64> {
    if image.is_empty() {
        bail!(Data, "cannot average an empty instance");
    }
    let sum: f64 = image.iter().map(|v| v.f64()).sum();
    Ok(sum / image.len() as f64)
}

/// Single-pass accumulator of per-class instance averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAverages {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl ClassAverages {
    pub fn new(class_count: usize) -> Self {
        ClassAverages { sums: vec![0.0; class_count], counts: vec![0; class_count] }
    }

    pub fn observe(&mut self, class: usize, average: f64) -> Result<()> {
        if class >= self.sums.len() {
            bail!(Data, "class {} out of range for {} classes", class, self.sums.len());
        }
        self.sums[class] += average;
        self.counts[class] += 1;
        Ok(())
    }

    /// Fails with [`Error::Calibration`] naming the first class that was never
    /// observed.
    pub fn finalize(self) -> Result<ClassAverageTable> {
        if let Some(class) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::Calibration { class });
        }
        let means = self.sums.iter().zip(&self.counts).map(|(&s, &c)| s / c as f64).collect();
        Ok(ClassAverageTable { sums: self.sums, counts: self.counts, means })
    }
}

/// Finalized per-class means `Ā` (`mean = sum / count`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAverageTable {
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
}

impl ClassAverageTable {
    pub fn class_count(&self) -> usize {
        self.means.len()
    }
}

/// Accumulates a calibration stream of `(instance, class)` pairs in stream
/// order.
pub fn calibrate<'a, T: Real>(
    stream: impl IntoIterator<Item = (&'a [T], usize)>,
    class_count: usize,
) -> Result<ClassAverageTable> {
    let mut acc = ClassAverages::new(class_count);
    for (image, class) in stream {
        acc.observe(class, instance_average(image)?)?;
    }
    acc.finalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBounds {
    pub mean: f64,
    pub a_min: f64,
    pub a_max: f64,
}

/// Per-class acceptance intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub upr_p: f64,
    pub lor_p: f64,
    pub classes: Vec<ClassBounds>,
}

/// `a_max = Ā + Ā·upr_p`, `a_min = Ā − Ā·lor_p` for every class.
pub fn finalize_thresholds(table: &ClassAverageTable, upr_p: f64, lor_p: f64) -> Result<ThresholdTable> {
    if !(upr_p >= 0.0) || !upr_p.is_finite() {
        bail!(Param, "upr_p must be a finite value >= 0, got {}", upr_p);
    }
    if !(0.0..=1.0).contains(&lor_p) {
        bail!(Param, "lor_p must be in [0, 1], got {}", lor_p);
    }
    let classes = table
        .means
        .iter()
        .map(|&mean| ClassBounds { mean, a_min: mean - mean * lor_p, a_max: mean + mean * upr_p })
        .collect();
    Ok(ThresholdTable { upr_p, lor_p, classes })
}

/// The instance that switched normalization on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// First out-of-range instance: its position in the batch, class and
    /// average.
    Instance { index: usize, class: usize, average: f64 },
    /// Normalization was forced on by configuration.
    Forced,
}

impl ThresholdTable {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn out_of_range(&self, class: usize, average: f64) -> Result<bool> {
        let Some(b) = self.classes.get(class) else {
            bail!(Data, "class {} has no threshold (table covers {} classes)", class, self.classes.len());
        };
        Ok(average > b.a_max || average < b.a_min)
    }

    /// Gate decision over precomputed `(average, class)` pairs. Returns the
    /// first out-of-range instance, or `None` when the batch passes through
    /// unnormalized. Every class id is validated even after a hit.
    pub fn check(&self, instances: impl IntoIterator<Item = (f64, usize)>) -> Result<Option<Trigger>> {
        let mut first = None;
        for (index, (average, class)) in instances.into_iter().enumerate() {
            if self.out_of_range(class, average)? && first.is_none() {
                first = Some(Trigger::Instance { index, class, average });
            }
        }
        Ok(first)
    }
}

/// One gate decision for a whole batch.
pub fn gate_batch<T: Real>(batch: &[(&[T], usize)], thresholds: &ThresholdTable) -> Result<(bool, Option<Trigger>)> {
    let averages = batch
        .iter()
        .map(|&(image, class)| Ok((instance_average(image)?, class)))
        .collect::<Result<Vec<_>>>()?;
    let trigger = thresholds.check(averages)?;
    Ok((trigger.is_some(), trigger))
}

/// A logged decision. `trigger` is present exactly when `decision` is true.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub epoch: usize,
    pub batch_index: usize,
    pub decision: bool,
    pub trigger: Option<Trigger>,
}

impl GateRecord {
    pub fn new(epoch: usize, batch_index: usize, trigger: Option<Trigger>) -> Self {
        GateRecord { epoch, batch_index, decision: trigger.is_some(), trigger }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTotals {
    pub batches_total: u64,
    pub batches_gated: u64,
}

impl GateTotals {
    pub fn fraction(&self) -> f64 {
        if self.batches_total == 0 {
            0.0
        } else {
            self.batches_gated as f64 / self.batches_total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateLog {
    pub records: Vec<GateRecord>,
    pub per_epoch: BTreeMap<usize, GateTotals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochFraction {
    pub epoch: usize,
    pub totals: GateTotals,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStats {
    pub per_epoch: Vec<EpochFraction>,
    pub pooled: GateTotals,
    pub pooled_fraction: f64,
}

impl GateLog {
    pub fn push(&mut self, record: GateRecord) {
        let t = self.per_epoch.entry(record.epoch).or_default();
        t.batches_total += 1;
        t.batches_gated += record.decision as u64;
        self.records.push(record);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Gated fraction per epoch and pooled over all epochs.
    pub fn stats(&self) -> Result<GateStats> {
        if self.records.is_empty() {
            bail!(Data, "gate log is empty");
        }
        let mut pooled = GateTotals::default();
        let per_epoch = self
            .per_epoch
            .iter()
            .map(|(&epoch, &totals)| {
                pooled.batches_total += totals.batches_total;
                pooled.batches_gated += totals.batches_gated;
                EpochFraction { epoch, totals, fraction: totals.fraction() }
            })
            .collect();
        Ok(GateStats { per_epoch, pooled, pooled_fraction: pooled.fraction() })
    }
}

/// Free-function form of [`GateLog::stats`].
pub fn gate_stats(log: &GateLog) -> Result<GateStats> {
    log.stats()
}
