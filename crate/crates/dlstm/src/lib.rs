//! File formats, configuration and the experiment runner around `dlstm-core`.

pub mod commands;
pub mod config;
pub mod exec;
pub mod report;
pub mod series;

pub use commands::{cmd_compare, cmd_gen_data, cmd_run, run_experiment, CommandError, RunOutcome};
pub use config::ExperimentConfig;
pub use series::parse_series;
