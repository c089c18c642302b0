//! Layered experiment configuration: defaults, then a `key = value` file,
//! then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adabn_core::train::{Scenario, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    /// Where the dataset is looked for when `data_dir` is not set.
    pub fn default_dir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "data/mnist",
            DatasetKind::Fashion => "data/fashion-mnist",
            DatasetKind::Cifar10 => "data/cifar-10-batches-bin",
            DatasetKind::Cifar100 => "data/cifar-100-binary",
            DatasetKind::Synthetic => "",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion" | "fashion-mnist" => Ok(DatasetKind::Fashion),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err("expected mnist, fashion, cifar10, cifar100 or synthetic".into()),
        }
    }
}

/// Everything a subcommand needs: the training settings plus data location
/// and sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    /// Explicit IDX files; override the names looked up in `data_dir`.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Explicit CIFAR batch files.
    pub cifar_files: Vec<PathBuf>,
    /// Keep only the first `n` records of the loaded data.
    pub subset_size: Option<usize>,
    /// Batch sizes swept by `compare` and `gatereport`.
    pub batch_sizes: Vec<usize>,
    /// Seeded repetitions in `gatereport`.
    pub replications: usize,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            images: None,
            labels: None,
            cifar_files: Vec::new(),
            subset_size: None,
            batch_sizes: vec![4, 8, 16, 32],
            replications: 20,
            train: TrainConfig::default(),
        }
    }
}

/// Every key accepted in config files and overrides.
pub const KEYS: &[&str] = &[
    "scenario",
    "batch_size",
    "epochs",
    "learning_rate",
    "sgd_momentum",
    "seed",
    "upr_p",
    "lor_p",
    "conv_filters",
    "dropout_rate",
    "folds",
    "train_limit",
    "eval_limit",
    "force_gate",
    "adaptive_eval",
    "dataset",
    "data_dir",
    "images",
    "labels",
    "cifar_files",
    "subset_size",
    "batch_sizes",
    "replications",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Value { key: key.into(), value: value.into(), reason: e.to_string() })
}

/// `none` (or an empty value) clears an optional limit.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match value {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "scenario" => t.scenario = parse::<Scenario>(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "sgd_momentum" => t.sgd_momentum = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "upr_p" => t.upr_p = parse(key, value)?,
            "lor_p" => t.lor_p = parse(key, value)?,
            "conv_filters" => {
                let v: Vec<usize> = parse_list(key, value)?;
                t.conv_filters = v.try_into().map_err(|v: Vec<usize>| Error::Value {
                    key: key.into(),
                    value: value.into(),
                    reason: format!("expected three filter counts, got {}", v.len()),
                })?;
            }
            "dropout_rate" => t.dropout_rate = parse(key, value)?,
            "folds" => t.folds = parse(key, value)?,
            "train_limit" => t.train_limit = parse_opt(key, value)?,
            "eval_limit" => t.eval_limit = parse_opt(key, value)?,
            "force_gate" => t.force_gate = parse(key, value)?,
            "adaptive_eval" => t.adaptive_eval = parse(key, value)?,
            "dataset" => self.dataset = parse(key, value)?,
            "data_dir" => self.data_dir = opt_path(value),
            "images" => self.images = opt_path(value),
            "labels" => self.labels = opt_path(value),
            "cifar_files" => self.cifar_files = parse_list(key, value)?,
            "subset_size" => self.subset_size = parse_opt(key, value)?,
            "batch_sizes" => self.batch_sizes = parse_list(key, value)?,
            "replications" => self.replications = parse(key, value)?,
            _ => return Err(Error::Usage(format!("unknown key `{key}`; valid keys: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies every setting in a config file body. Blank lines and text
    /// after `#` are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("{origin}:{}: expected `key = value`, got {line:?}", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Usage(format!("override {o:?} is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Defaults, then `file` if given, then `overrides`.
    pub fn resolve<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).at(path)?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::Value {
                key: "batch_sizes".into(),
                value: format!("{:?}", self.batch_sizes),
                reason: "need at least one positive batch size".into(),
            });
        }
        if self.replications == 0 {
            return Err(Error::Value { key: "replications".into(), value: "0".into(), reason: "must be positive".into() });
        }
        if self.subset_size == Some(0) {
            return Err(Error::Value { key: "subset_size".into(), value: "0".into(), reason: "must be positive".into() });
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from(self.dataset.default_dir()))
    }
}
