//! Random products on compact groups, the Bernoulli skew product, Følner
//! averaging, and equidistribution diagnostics.

pub mod actions;
pub mod bernoulli;
pub mod cli;
pub mod equidist;
pub mod error;
pub mod functions;
pub mod groups;
pub mod measures;
pub mod products;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
