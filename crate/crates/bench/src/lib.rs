//! Experiment harness for delayed-feedback nonsubmodular online learning:
//! config parsing, the run matrix, regret accounting against a brute-force
//! hindsight comparator, CSV/SVG persistence, and the verification suite
//! behind the CLI.

pub mod config;
pub mod error;
pub mod output;
pub mod regret;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
