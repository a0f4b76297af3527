//! Configuration-driven experiment runner for `instadep`.

pub mod config;
pub mod experiments;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::run;
