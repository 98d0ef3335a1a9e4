//! Std companion of `qrm-core`: run configs, experiment runners, output
//! formats and plots behind the `qrm` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod output;
pub mod parallel;
pub mod plot;

pub use config::{load_config, parse_config, Experiment, Format, RunConfig};
pub use error::CliError;
pub use experiments::{run, Bundle};
pub use parallel::{worker_count, Workers};
