//! Desk-scale reinforcement-learning toolkit built around three ideas:
//!
//! 1. **Smoothed backups** — Bellman targets take an expectation of next-state
//!    values under an action distribution derived from the value estimates
//!    instead of a hard max ([`smoothing`]).
//! 2. **Belief fusion** — that distribution is blended with a per-category
//!    belief accumulated from experience, `b = (1-beta) * z + beta * p`,
//!    with `beta` following a schedule ([`belief`]).
//! 3. **Conceptual categories** — beliefs attach to categories formed by
//!    online leader clustering over normalized state features ([`ccf`]).
//!
//! The [`agents`] module combines these into CBDQ (tabular), CBDPPO-lite
//! (clipped policy-gradient with a blended ratio), and CBDSAC-lite (soft
//! actor-critic with Gaussian belief blending), plus vanilla baselines for
//! controlled comparisons. [`mdp`] provides exact tabular models and value
//! iteration for oracle checks, and [`envs`] the small deterministic-by-seed
//! environments everything runs on.
//!
//! Everything is CPU-only, single-threaded, and deterministic given a seed.

pub mod agents;
pub mod belief;
pub mod ccf;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod rng;
pub mod smoothing;

pub use error::{CoreError, Result};
