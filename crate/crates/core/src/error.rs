use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension or shape precondition was violated.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numeric parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A matrix expected to be symmetric positive definite failed to factor.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Simulation produced a non-finite value.
    #[error("simulation error: {0}")]
    Simulation(String),

    /// A run configuration was rejected before any computation.
    #[error("config error: {0}")]
    Config(String),
}
