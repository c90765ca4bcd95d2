//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An element index fell outside the ground set `1..=n`.
    #[error("element {index} out of range for ground set of size {n}")]
    ElementOutOfRange { index: usize, n: usize },

    /// A precondition on set membership was violated (e.g. a marginal gain
    /// queried for an element already in the set).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An exhaustive enumeration was requested beyond the tractable guard.
    #[error("ground set of size {n} exceeds the enumeration guard ({max})")]
    Capacity { n: usize, max: usize },

    /// A coordinate left the unit hypercube.
    #[error("coordinate {index} = {value} outside [0,1]")]
    Domain { index: usize, value: f64 },

    /// A scalar parameter violated its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The feedback protocol was driven out of order.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A numerical factorization failed.
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
