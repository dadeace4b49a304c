//! Experiment runner behind the `cgep` binary.

pub mod cli;
pub mod config;
pub mod data;
pub mod run;

pub use config::{ExperimentConfig, Profile};
