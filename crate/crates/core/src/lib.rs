//! Estimation of average counterfactual outcomes when the exposure and some
//! confounders are incompletely observed.

pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod mi;
pub mod nuisance;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
