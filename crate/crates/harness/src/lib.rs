//! Experiment harness for the cbdrl-core agents: flat-file experiment
//! configs, seeded multi-seed runs with JSONL/CSV artifacts, run-vs-run
//! comparison, hyperparameter sweeps, and exact-solution convergence checks.
//!
//! The `cbdrl` binary is a thin CLI over this library; everything it can do
//! is callable directly from here (and from tests).

pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod runner;

pub use error::{HarnessError, Result};
