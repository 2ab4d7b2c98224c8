//! Environments: small tabular worlds with exact MDP views, a classic
//! cart-pole balancing task, and a one-dimensional continuous reach task.
//!
//! Every environment owns its own deterministic RNG stream derived from the
//! run seed, so two runs with the same seed and config produce identical
//! trajectories regardless of what the agent's streams consume.

mod cartpole;
mod chain;
mod gridworld;
mod reach1d;
mod tabular;

pub use cartpole::{cartpole_dynamics, CartPole};
pub use chain::Chain;
pub use gridworld::GridWorld;
pub use reach1d::Reach1d;
pub use tabular::TabularEnv;

use crate::error::{CoreError, Result};
use crate::mdp::TabularMdp;
use crate::rng::RngSnapshot;
use std::collections::{BTreeMap, BTreeSet};

/// String-keyed environment parameters as they arrive from configs.
pub type EnvParams = BTreeMap<String, String>;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep<O> {
    pub obs: O,
    pub reward: f64,
    /// Episode ended in a terminal state; targets must not bootstrap.
    pub terminated: bool,
    /// Episode hit its step cap; targets may still bootstrap.
    pub truncated: bool,
}

impl<O> EnvStep<O> {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Observation for discrete-action environments: an integer state id for
/// tabular methods plus a normalized feature vector for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObs {
    pub state_id: usize,
    pub features: Vec<f64>,
}

pub trait DiscreteActionEnv: Send {
    fn name(&self) -> &'static str;
    fn n_actions(&self) -> usize;
    /// Number of distinct state ids this environment can emit.
    fn n_states(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn max_episode_steps(&self) -> usize;
    fn reset(&mut self) -> DiscreteObs;
    fn step(&mut self, action: usize) -> Result<EnvStep<DiscreteObs>>;
    /// Exact MDP view at the given discount, for environments whose
    /// dynamics are fully known. Step caps are truncations and do not
    /// appear in the view.
    fn tabular_view(&self, gamma: f64) -> Option<Result<TabularMdp>> {
        let _ = gamma;
        None
    }
    fn rng_snapshot(&self) -> RngSnapshot;
}

pub trait ContinuousActionEnv: Send {
    fn name(&self) -> &'static str;
    fn action_dim(&self) -> usize;
    /// Symmetric per-dimension action bound; actions are clamped to
    /// `[-bound, bound]` before they touch the dynamics.
    fn action_bound(&self) -> f64;
    fn feature_dim(&self) -> usize;
    fn max_episode_steps(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep<Vec<f64>>>;
    fn rng_snapshot(&self) -> RngSnapshot;
}

pub enum EnvHandle {
    Discrete(Box<dyn DiscreteActionEnv>),
    Continuous(Box<dyn ContinuousActionEnv>),
}

impl EnvHandle {
    pub fn name(&self) -> &'static str {
        match self {
            EnvHandle::Discrete(e) => e.name(),
            EnvHandle::Continuous(e) => e.name(),
        }
    }
}

impl std::fmt::Debug for EnvHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            EnvHandle::Discrete(_) => "Discrete",
            EnvHandle::Continuous(_) => "Continuous",
        };
        write!(f, "EnvHandle::{kind}({})", self.name())
    }
}

/// Builds the named environment. Unknown names and unknown or malformed
/// parameters are errors that name the offender.
pub fn make_env(name: &str, params: &EnvParams, seed: u64) -> Result<EnvHandle> {
    let mut reader = ParamReader::new(name, params);
    let handle = match name {
        "gridworld" => EnvHandle::Discrete(Box::new(GridWorld::from_params(&mut reader, seed)?)),
        "cliff" => EnvHandle::Discrete(Box::new(GridWorld::cliff(&mut reader, seed)?)),
        "chain" => EnvHandle::Discrete(Box::new(Chain::from_params(&mut reader, seed)?)),
        "cartpole" => EnvHandle::Discrete(Box::new(CartPole::from_params(&mut reader, seed)?)),
        "reach1d" => {
            EnvHandle::Continuous(Box::new(Reach1d::from_params(&mut reader, seed)?))
        }
        "random_mdp" => {
            EnvHandle::Discrete(Box::new(TabularEnv::from_params(&mut reader, seed)?))
        }
        other => {
            return Err(CoreError::UnknownEnvironment(other.to_string()));
        }
    };
    reader.finish()?;
    Ok(handle)
}

/// Typed access to [`EnvParams`] that remembers which keys were consumed so
/// [`ParamReader::finish`] can reject the ones nobody asked for.
pub struct ParamReader<'a> {
    env: &'a str,
    params: &'a EnvParams,
    consumed: BTreeSet<String>,
}

impl<'a> ParamReader<'a> {
    pub fn new(env: &'a str, params: &'a EnvParams) -> Self {
        ParamReader {
            env,
            params,
            consumed: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.consumed.insert(key.to_string());
        self.params.get(key).map(|s| s.as_str())
    }

    pub fn get_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CoreError::EnvParameter {
                key: key.to_string(),
                reason: format!("expected a non-negative integer, got {s:?}"),
            }),
        }
    }

    pub fn get_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CoreError::EnvParameter {
                key: key.to_string(),
                reason: format!("expected a non-negative integer, got {s:?}"),
            }),
        }
    }

    pub fn get_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| CoreError::EnvParameter {
                    key: key.to_string(),
                    reason: format!("expected a number, got {s:?}"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CoreError::EnvParameter {
                        key: key.to_string(),
                        reason: "must be finite".to_string(),
                    })
                }
            }
        }
    }

    /// Cell list in `"row,col;row,col"` form.
    pub fn get_cells(&mut self, key: &str) -> Result<Vec<(usize, usize)>> {
        let Some(s) = self.raw(key) else {
            return Ok(Vec::new());
        };
        let mut cells = Vec::new();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let mut it = part.split(',');
            let (Some(r), Some(c), None) = (it.next(), it.next(), it.next()) else {
                return Err(CoreError::EnvParameter {
                    key: key.to_string(),
                    reason: format!("expected \"row,col\" entries separated by ';', got {part:?}"),
                });
            };
            let parse = |v: &str| -> Result<usize> {
                v.trim().parse().map_err(|_| CoreError::EnvParameter {
                    key: key.to_string(),
                    reason: format!("expected a non-negative integer, got {v:?}"),
                })
            };
            cells.push((parse(r)?, parse(c)?));
        }
        Ok(cells)
    }

    pub fn finish(self) -> Result<()> {
        for key in self.params.keys() {
            if !self.consumed.contains(key) {
                return Err(CoreError::EnvParameter {
                    key: key.clone(),
                    reason: format!("unknown parameter for environment {:?}", self.env),
                });
            }
        }
        Ok(())
    }
}
