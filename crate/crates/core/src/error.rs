use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed saturation constants for `{name}`: {reason}")]
    MalformedSaturation { name: String, reason: String },

    #[error("chain length n={n} is degenerate: {reason}")]
    DegenerateChain { n: usize, reason: String },

    #[error("gain synthesis failed at level {level}: {reason}")]
    Synthesis { level: usize, reason: String },

    #[error("linear core synthesis failed after {iterations} iterations (worst rho = {worst_rho}, lambda_max = {worst_lambda})")]
    LinearCore {
        iterations: usize,
        worst_rho: f64,
        worst_lambda: f64,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("integration failed at t={t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        last_state: Vec<f64>,
    },

    #[error("domain violation in `{check}`: {reason}")]
    Domain { check: String, reason: String },

    #[error("empty signal trace")]
    EmptyTrace,
}

pub type Result<T> = std::result::Result<T, Error>;
