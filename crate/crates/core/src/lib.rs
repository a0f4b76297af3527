//! Lagged versus instantaneous environment models.
//!
//! A lagged model predicts each next-state dimension independently given the
//! current state and action; an instantaneous model also captures the
//! correlation between next-state dimensions. This crate provides the
//! environments, learnable models, model rollouts, exact tabular planning and
//! numerical checks needed to compare the two.

pub mod corr;
pub mod dataset;
pub mod env;
pub mod envs;
pub mod error;
pub mod grid;
pub mod models;
pub mod planning;
pub mod rollout;
pub mod rng;
pub mod state;
pub mod theory;

pub use corr::{CorrelationMatrix, GaussianPrediction};
pub use dataset::{Dataset, Provenance};
pub use env::{Environment, MeanStd, Policy, RandomPolicy, Step};
pub use error::{Error, Result};
pub use grid::{Axis, Grid};
pub use models::{fit_model, DynamicsModel, ModelMode, ModelSpec};
pub use rng::RngStream;
pub use state::{ActionId, StateVec, TransitionRecord};
