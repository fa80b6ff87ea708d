//! Bayesian monotone regression with a three-component normal mixture
//! disturbance, fitted by slice-within-Gibbs sampling.

mod mixture;
mod regression;
mod sampler;

pub use mixture::MixtureParams;
pub use regression::{fit_regression, regression_problem, RegressionFit};
pub use sampler::{quad_interval, Block, BlockState, MixtureTrace, Posterior, Problem, Sampler, SamplerConfig};
