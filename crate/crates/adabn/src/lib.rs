//! File formats, configuration, experiment runners and reports around
//! [`adabn_core`].

pub mod cifar;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod report;

pub use error::{Error, Result};
