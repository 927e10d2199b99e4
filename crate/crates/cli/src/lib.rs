//! Experiment driver: `synth` generates the multi-farm dataset, `train` runs
//! one regime, `evaluate` scores trained regimes on the test split and
//! `compare` lines reports up side by side.
//!
//! Every artifact carries the config hash, seed and tool version. Apart from
//! the wall times in `rounds.jsonl`, re-running a command with the same
//! inputs reproduces its outputs byte for byte, whatever the thread count.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use artifacts::Layout;
pub use config::ExperimentConfig;
pub use error::{exit, CliError, Result};
