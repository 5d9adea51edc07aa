//! Config-driven runner for the `stabent-core` numerics: TOML experiments,
//! built-in demos, CSV/JSON reports and the `stabent` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod demos;
pub mod experiment;
pub mod parallel;
pub mod report;

pub use cli::{execute, load_config, main_with, Cli, Command};
pub use config::ExperimentConfig;
pub use experiment::Experiment;
