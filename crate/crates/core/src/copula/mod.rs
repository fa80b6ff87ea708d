pub mod autocov;
pub mod kendall;
pub mod marginal;
pub mod simulate;
pub mod var;

pub use autocov::{autocorr_blocks, autocovariances, toeplitz_window};
pub use kendall::{auto_dependence, kendall_tau, sample_kendall};
pub use marginal::{compute_copula_data, CopulaData, MarginalTransform};
pub use simulate::{latent_history, simulate_forward, simulate_latent, Draws};
pub use var::{fit_var, select_and_fit, select_lags, spectral_radius, CopulaModel, LagCandidate, LagSet};
