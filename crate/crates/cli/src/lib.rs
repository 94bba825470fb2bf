//! Command-line front end: configuration, experiment runner, and artifacts.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentKind, Method, Preset, RunConfig, Suite};
pub use output::Manifest;
pub use runner::{diagnose_trace, run_experiment, run_suites, RunOutcome, RunSummary};
