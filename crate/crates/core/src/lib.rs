//! Summaries of variable-dimensional posterior distributions.
//!
//! The crate samples the posterior of a sinusoids-in-noise decomposition with
//! a reversible-jump MCMC sampler ([`sinusoids`]), then fits a
//! variable-dimensional Bernoulli-Gaussian model with a Poisson background to
//! the draws by a robust stochastic EM ([`sem`]). The fitted components give a
//! mean, a spread and a probability of presence for each signal component,
//! which removes the label-switching ambiguity of the raw draws.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod config;
pub mod error;
pub mod io;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod robust;
pub mod sem;
pub mod sinusoids;

pub use error::{Error, Result};
pub use model::{
    AllocationVector, GaussianComponent, SampleMeta, SampleSet, SummaryModel, VariableDimSample,
};
