//! Learning agents: a tabular value learner and its vanilla reference, an
//! on-policy clipped-surrogate actor-critic, and an off-policy twin-critic
//! actor for continuous actions — all sharing the category/belief machinery.

pub mod cbdppo;
pub mod cbdq;
pub mod cbdsac;
pub mod policy;
pub mod qtable;
pub mod replay;
pub mod schedules;
pub mod train;

pub use cbdppo::{PpoAgent, PpoConfig};
pub use cbdq::{CbdqAgent, CbdqConfig, QLearningAgent};
pub use cbdsac::{SacAgent, SacConfig};
pub use qtable::QTable;
pub use train::{
    convergence_probe, train_discrete, train_discrete_with_eval, train_ppo, train_sac, Checkpoint,
    DeltaSeries, EvalRecord, RunRecord, TrainOutput, TrainParams, CHECKPOINT_FORMAT_VERSION,
};

use crate::ccf::{CategoryId, Partition};
use crate::envs::DiscreteObs;
use crate::error::Result;
use crate::rng::RngSnapshot;
use serde::{Deserialize, Serialize};

/// What a discrete controller reports about one action selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectInfo {
    pub action: usize,
    /// Category the observation landed in, if the controller clusters.
    pub category: Option<CategoryId>,
    /// Blend weight in effect for this selection.
    pub beta: f64,
    /// Exploration rate in effect for this selection.
    pub epsilon: f64,
}

/// Learned weights in a serializable, architecture-tagged form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AgentState {
    Q {
        n_states: usize,
        n_actions: usize,
        q: Vec<f64>,
        visits: Vec<u64>,
    },
    Ppo {
        n_features: usize,
        n_actions: usize,
        policy_w: Vec<f64>,
        value_w: Vec<f64>,
    },
    Sac {
        n_features: usize,
        action_dim: usize,
        actor_w: Vec<f64>,
        log_std: Vec<f64>,
        critic1: Vec<f64>,
        critic2: Vec<f64>,
        target1: Vec<f64>,
        target2: Vec<f64>,
        alpha_ent: f64,
    },
}

/// A step-at-a-time tabular learner the discrete training loop can drive.
///
/// `select` may mutate internal state (exploration stream, category
/// statistics); `update` consumes the transition that selection produced.
/// `next` is `None` when the episode terminated (no bootstrap) and `Some`
/// when it continues or was truncated by a step cap.
pub trait DiscreteController {
    fn begin_episode(&mut self);
    fn select(&mut self, obs: &DiscreteObs) -> Result<SelectInfo>;
    fn update(
        &mut self,
        prev: &DiscreteObs,
        info: &SelectInfo,
        reward: f64,
        next: Option<&DiscreteObs>,
    ) -> Result<()>;
    fn q_abs_max(&self) -> f64;
    fn partition(&self) -> Option<&Partition>;
    fn partition_mut(&mut self) -> Option<&mut Partition>;
    fn agent_state(&self) -> AgentState;
    fn rng_snapshots(&self) -> Vec<RngSnapshot>;
    fn step_count(&self) -> u64;
    /// Deterministic exploit action for evaluation probes. Must not mutate
    /// the controller: no exploration draw, no category or belief updates.
    fn greedy_action(&self, obs: &DiscreteObs) -> Result<usize>;
}

/// Central-difference gradient of `f` at `w` with step `h`, one coordinate
/// at a time. Used to check analytic gradients.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(w.len());
    let mut probe = w.to_vec();
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let up = f(&probe);
        probe[i] = w[i] - h;
        let down = f(&probe);
        probe[i] = w[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}
