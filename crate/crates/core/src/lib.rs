//! Online minimization of structured nonsubmodular set functions.
//!
//! The crate covers the full pipeline: set-function oracles and their
//! structural analysis (`setfn`), the chain decomposition and extension
//! machinery that lifts subset problems to the unit hypercube (`lovasz`),
//! delayed-feedback routing (`feedback`), the one-point bandit gradient
//! estimator (`estimator`), the online learners themselves (`algorithms`),
//! and the synthetic structured-sparse-learning environment used to compare
//! them (`sparsebench`).

pub mod algorithms;
pub mod error;
pub mod estimator;
pub mod feedback;
pub mod lovasz;
pub mod seed;
pub mod setfn;
pub mod sparsebench;

pub(crate) mod linalg;

pub use error::Error;
