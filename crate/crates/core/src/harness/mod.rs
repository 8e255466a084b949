//! Experiment configuration, data generation, metrics output, rate fits
//! and the CLI.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod experiment;
pub mod metrics;
pub mod rates;

pub use config::{ExperimentConfig, ExperimentKind, Preset, ProblemKind};
pub use experiment::{run_experiment, ExperimentOutput};
pub use rates::{fit_rate, RateFit};
