pub mod backtest;
pub mod copula;
pub mod error;
pub mod events;
pub mod forecast;
pub mod market;
pub mod mcmc;
pub mod model;
pub mod spline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
