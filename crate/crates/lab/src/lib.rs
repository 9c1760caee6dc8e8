//! Experiment runner for learned constellation shaping: configuration
//! loading, training and test orchestration, sweeps and result files.

pub mod analysis;
pub mod config;
pub mod output;
pub mod run;

pub use config::{load, parse, ConfigError, LoadedConfig, RunConfig};
pub use run::{execute, RunSummary, Sweep};
