use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::gate::{DEFAULT_LOR_P, DEFAULT_UPR_P};

/// Where the input normalization site sits in the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Normalize every batch.
    Bn,
    /// No normalization site.
    NoBn,
    /// Calibrate in epoch 1, then normalize only gated batches.
    Adaptive,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Bn, Scenario::NoBn, Scenario::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Bn => "bn",
            Scenario::NoBn => "no_bn",
            Scenario::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s {
            "bn" => Ok(Scenario::Bn),
            "no_bn" => Ok(Scenario::NoBn),
            "adaptive" => Ok(Scenario::Adaptive),
            other => Err(alloc::format!("unknown scenario {other:?} (expected bn, no_bn or adaptive)")),
        }
    }
}

/// How the adaptive scenario's site behaves at evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveEval {
    /// Normalize with the running statistics of the gated training batches;
    /// pass through unchanged if the gate never fired.
    RunningStats,
    /// Always pass through unchanged.
    Identity,
}

impl AdaptiveEval {
    pub fn as_str(self) -> &'static str {
        match self {
            AdaptiveEval::RunningStats => "running_stats",
            AdaptiveEval::Identity => "identity",
        }
    }
}

impl fmt::Display for AdaptiveEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdaptiveEval {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s {
            "running_stats" => Ok(AdaptiveEval::RunningStats),
            "identity" => Ok(AdaptiveEval::Identity),
            other => Err(alloc::format!("unknown adaptive_eval {other:?} (expected running_stats or identity)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: Scenario,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sgd_momentum: f64,
    pub seed: u64,
    pub upr_p: f64,
    pub lor_p: f64,
    pub conv_filters: [usize; 3],
    pub dropout_rate: f64,
    pub folds: usize,
    /// Cap on training instances per fold.
    pub train_limit: Option<usize>,
    /// Cap on validation instances per fold.
    pub eval_limit: Option<usize>,
    /// Adaptive scenario only: normalize every batch from epoch 2 regardless
    /// of the thresholds.
    pub force_gate: bool,
    pub adaptive_eval: AdaptiveEval,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scenario: Scenario::Adaptive,
            batch_size: 4,
            epochs: 10,
            learning_rate: 0.001,
            sgd_momentum: 0.9,
            seed: 0,
            upr_p: DEFAULT_UPR_P,
            lor_p: DEFAULT_LOR_P,
            conv_filters: [32, 64, 64],
            dropout_rate: 0.2,
            folds: 3,
            train_limit: Some(6000),
            eval_limit: Some(1000),
            force_gate: false,
            adaptive_eval: AdaptiveEval::RunningStats,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be at least 1");
        }
        if self.epochs == 0 {
            bail!(Config, "epochs must be at least 1");
        }
        if self.scenario == Scenario::Adaptive && self.epochs < 2 {
            bail!(Config, "the adaptive scenario needs epochs >= 2 (epoch 1 only calibrates)");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            bail!(Config, "learning_rate must be positive, got {}", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            bail!(Config, "sgd_momentum must be in [0, 1), got {}", self.sgd_momentum);
        }
        if !(self.upr_p >= 0.0) || !self.upr_p.is_finite() {
            bail!(Config, "upr_p must be a finite value >= 0, got {}", self.upr_p);
        }
        if !(0.0..=1.0).contains(&self.lor_p) {
            bail!(Config, "lor_p must be in [0, 1], got {}", self.lor_p);
        }
        if self.conv_filters.contains(&0) {
            bail!(Config, "conv_filters must all be positive, got {:?}", self.conv_filters);
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            bail!(Config, "dropout_rate must be in [0, 1), got {}", self.dropout_rate);
        }
        if self.folds < 2 {
            bail!(Config, "folds must be at least 2, got {}", self.folds);
        }
        if self.train_limit == Some(0) || self.eval_limit == Some(0) {
            bail!(Config, "train_limit and eval_limit must be positive when set");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn adaptive_needs_two_epochs() {
        let c = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(c.validate(), Err(crate::Error::Config(_))));
        let c = TrainConfig { epochs: 1, scenario: Scenario::NoBn, ..TrainConfig::default() };
        c.validate().unwrap();
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("batchnorm".parse::<Scenario>().is_err());
    }
}
