use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimated error {error:e})")]
    NonIntegrable { lo: f64, hi: f64, error: f64 },

    #[error("cell [{lo}, {hi}) has zero probability")]
    EmptyCell { lo: f64, hi: f64 },

    #[error("equal-width partition needs bounded support")]
    UnboundedSupport,

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid side-information model: {0}")]
    InvalidModel(String),

    #[error("invalid simulation input: {0}")]
    InvalidSimulation(String),

    #[error("invalid carry-free gain: {0}")]
    InvalidGain(String),

    #[error("zero state: apply zero control")]
    ZeroState,

    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
