//! Bayesian optimization for black boxes that return binomial success counts.
//!
//! Two surrogates are provided: an exact Gaussian-process regression on
//! observed success fractions ([`gaussian`]) and a Laplace-approximated GP
//! with a binomial likelihood on the raw counts ([`binomial`]). Expected
//! Improvement is available in closed form and by Monte-Carlo through the
//! logistic link ([`acquisition`]). A two-fidelity continuation rule based on
//! a Beta posterior ([`fidelity`]) decides whether a cheap evaluation is worth
//! topping up to full precision.
//!
//! [`engine`] runs the optimization loop, [`benchmark`] provides rescaled test
//! functions with a binomial simulator, [`metrics`] computes cost-aligned
//! regret averages and Dolan-More performance profiles, and [`cli`] wires it
//! all into a reproducible experiment runner.

pub mod acquisition;
pub mod benchmark;
pub mod binomial;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fidelity;
pub mod gaussian;
pub mod hyper;
pub mod kernel;
mod linalg;
pub mod metrics;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
pub use kernel::{Bounds, Dataset, KernelParams, Observation};
