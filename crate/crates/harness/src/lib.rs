//! Experiment runner for LQR-kernel Bayesian optimization.
//!
//! Studies are described by an [`config::ExperimentConfig`], executed by
//! [`run::execute`] and written as CSV and JSON files.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arms;
pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod studies;

pub use config::{ExperimentConfig, Study};
pub use error::{HarnessError, Result};
pub use run::{execute, RunReport};
