//! Model construction, the three training scenarios and cross-validation.

mod config;
mod metrics;
mod model;
mod run;
mod sgd;

pub use config::{AdaptiveEval, Scenario, TrainConfig};
pub use metrics::{accuracy, mean_and_std, CrossvalSummary, EpochMetrics, RunMetrics};
pub use model::{build_model, shape_chain, ForwardCache, Gradients, LayerShape, Model, DROPOUT_LAYER};
pub use run::{evaluate_accuracy, fold_seed, gate_sweep, run_crossval, run_training, train_model, GateSweep, Observer};
pub use sgd::{sgd_update, Sgd};
