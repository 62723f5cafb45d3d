//! Experiment orchestration for the `spca` command-line tool.
//!
//! An [`ExperimentSpec`] describes a Monte Carlo study over the synthetic
//! covariance models; [`run`] replays it deterministically and returns
//! long-form [`ResultRecord`] rows (one metric per row) for CSV or JSON
//! emission. Trials are seeded independently, so any subset of trials
//! reproduces exactly the rows it would contribute to the full run.

pub mod config;
pub mod records;
pub mod runner;

pub use config::{Algorithm, ExperimentKind, ExperimentSpec};
pub use records::{write_csv, write_json, ResultRecord};
pub use runner::run;
