use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent or physically invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A request would exceed a hard resource limit (dense matrices, memory).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The integrator could not reach its error target.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// A density matrix or state failed a physical validity check.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// API misuse, e.g. overlapping subsystem sets.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
