use thiserror::Error;

/// Errors raised by the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamps misaligned in {file}: first offending stamp {stamp}")]
    Alignment { file: String, stamp: String },

    #[error("negative flow on arc {arc} at t={t}: {value}")]
    NegativeFlow { arc: String, t: usize, value: f64 },

    #[error("complementarity violated on arcs {forward}/{reverse} at t={t}: both flows positive")]
    Complementarity {
        forward: String,
        reverse: String,
        t: usize,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("unknown arc `{0}`")]
    UnknownArc(String),

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("degenerate covariate: min and max both equal {0}")]
    DegenerateCovariate(f64),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
