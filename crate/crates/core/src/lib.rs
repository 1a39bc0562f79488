//! Identifiability and falsifiability diagnostics for Bayesian model
//! expansion: information estimators, Fisher-information bounds, predictive
//! checks and bootstrap design comparisons.

pub mod bootstrap;
pub mod checks;
pub mod dist;
pub mod error;
pub mod fisher;
pub mod info;
pub mod linalg;
pub mod model;
pub mod numdiff;
pub mod rng;
pub mod samplers;
pub mod suite;

pub use error::{Error, Result};
