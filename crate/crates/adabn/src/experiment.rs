//! Subcommand bodies, independent of argument parsing and file output.

use std::fmt;
use std::str::FromStr;

use adabn_core::data::{kfold_split, LabeledDataset};
use adabn_core::gate::GateTotals;
use adabn_core::gradcheck::{composed_network_check, layer_suite, LayerCheck, DEFAULT_STEP};
use adabn_core::train::{
    fold_seed, gate_sweep, run_crossval, train_model, CrossvalSummary, Observer, RunMetrics, Scenario, TrainConfig,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Random points per gradient in the `gradcheck` subcommand.
pub const GRADCHECK_POINTS: usize = 10;
/// Tolerance of the composed network check.
pub const COMPOSED_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Train,
    Crossval,
    Compare,
    Gatereport,
    Gradcheck,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Crossval => "crossval",
            Command::Compare => "compare",
            Command::Gatereport => "gatereport",
            Command::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Command::Train, Command::Crossval, Command::Compare, Command::Gatereport, Command::Gradcheck]
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareCell {
    pub batch_size: usize,
    pub scenario: Scenario,
    pub summary: CrossvalSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateRow {
    pub batch_size: usize,
    pub replication: usize,
    pub seed: u64,
    pub totals: GateTotals,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub checks: Vec<LayerCheck>,
    pub composed_worst: f64,
    pub composed_tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LayerCheck::passed) && self.composed_worst < self.composed_tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Results {
    Train { fold: usize, metrics: RunMetrics },
    Crossval { summary: CrossvalSummary },
    Compare { cells: Vec<CompareCell> },
    Gatereport { rows: Vec<GateRow> },
    Gradcheck { report: GradcheckReport },
}

impl Results {
    /// Every training run contained in the results, tagged with its fold.
    pub fn runs(&self) -> Vec<(usize, &RunMetrics)> {
        match self {
            Results::Train { fold, metrics } => vec![(*fold, metrics)],
            Results::Crossval { summary } => summary.runs.iter().enumerate().collect(),
            Results::Compare { cells } => cells.iter().flat_map(|c| c.summary.runs.iter().enumerate()).collect(),
            Results::Gatereport { .. } | Results::Gradcheck { .. } => Vec::new(),
        }
    }
}

/// Trains on the first fold of the configured split.
pub fn train(cfg: &TrainConfig, data: &LabeledDataset, observer: &mut dyn Observer) -> Result<Results> {
    let split = kfold_split(data.len(), cfg.folds, cfg.seed)?;
    let fold_cfg = TrainConfig { seed: fold_seed(cfg.seed, 0), ..cfg.clone() };
    observer.fold_start(0, 1);
    let (_, metrics) = train_model(&fold_cfg, data, &split.folds[0], observer)?;
    Ok(Results::Train { fold: 0, metrics })
}

pub fn crossval(cfg: &TrainConfig, data: &LabeledDataset, observer: &mut dyn Observer) -> Result<Results> {
    Ok(Results::Crossval { summary: run_crossval(cfg, data, observer)? })
}

/// Cross-validates every scenario at every batch size.
pub fn compare(exp: &ExperimentConfig, data: &LabeledDataset, observer: &mut dyn Observer) -> Result<Results> {
    let mut cells = Vec::with_capacity(exp.batch_sizes.len() * Scenario::ALL.len());
    for &batch_size in &exp.batch_sizes {
        for scenario in Scenario::ALL {
            let cfg = TrainConfig { scenario, batch_size, ..exp.train.clone() };
            cells.push(CompareCell { batch_size, scenario, summary: run_crossval(&cfg, data, observer)? });
        }
    }
    Ok(Results::Compare { cells })
}

/// Gated fractions over every batch size and replication, without training.
/// Replication `r` uses seed `seed + r` and calibrates on the first
/// `train_limit` instances.
pub fn gatereport(exp: &ExperimentConfig, data: &LabeledDataset) -> Result<Results> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut rows = Vec::with_capacity(exp.replications * exp.batch_sizes.len());
    for replication in 0..exp.replications {
        let seed = exp.train.seed.wrapping_add(replication as u64);
        for &batch_size in &exp.batch_sizes {
            let cfg = TrainConfig { batch_size, seed, ..exp.train.clone() };
            let totals = gate_sweep(&cfg, data, &indices)?.gate_log.stats()?.pooled;
            rows.push(GateRow { batch_size, replication, seed, totals, fraction: totals.fraction() });
        }
    }
    Ok(Results::Gatereport { rows })
}

pub fn gradcheck(seed: u64) -> Result<Results> {
    let checks = layer_suite(seed, GRADCHECK_POINTS, DEFAULT_STEP)?;
    let composed_worst = composed_network_check(seed, DEFAULT_STEP)?;
    Ok(Results::Gradcheck { report: GradcheckReport { checks, composed_worst, composed_tolerance: COMPOSED_TOLERANCE } })
}

/// Runs `command`; `data` is loaded lazily since `gradcheck` needs none.
pub fn execute(
    command: Command,
    exp: &ExperimentConfig,
    load: impl FnOnce() -> Result<LabeledDataset>,
    observer: &mut dyn Observer,
) -> Result<Results> {
    match command {
        Command::Gradcheck => gradcheck(exp.train.seed),
        Command::Train => train(&exp.train, &load()?, observer),
        Command::Crossval => crossval(&exp.train, &load()?, observer),
        Command::Compare => compare(exp, &load()?, observer),
        Command::Gatereport => gatereport(exp, &load()?),
    }
}
