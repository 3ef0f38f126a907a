//! Configuration-driven experiment runner around the `mtsbl` library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plots;
pub mod runner;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig, RunMode};
pub use runner::{run, run_realization, RealizationRun, RunSummary};
