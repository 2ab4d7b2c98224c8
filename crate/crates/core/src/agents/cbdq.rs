//! CBDQ: tabular Q-learning whose action choice and bootstrap target both
//! flow through a smoothed, belief-fused action distribution.
//!
//! With the blend weight pinned to zero and `ClippedMax { tau: 0 }`
//! smoothing, every fused distribution is an exact point mass on the greedy
//! action, and the agent reproduces vanilla Q-learning bit for bit — the
//! baseline [`QLearningAgent`] below exists to verify exactly that, so its
//! RNG consumption pattern deliberately mirrors CBDQ's (one uniform draw
//! per selection, one range draw only when exploring).

use super::qtable::QTable;
use super::schedules::{strategy_at, AlphaSchedule, EpsilonSchedule, SmoothingAnneal};
use super::{AgentState, DiscreteController, SelectInfo};
use crate::belief::{fuse_discrete, BetaSchedule};
use crate::ccf::{BeliefMode, CategoryBelief, Partition, PartitionConfig};
use crate::envs::DiscreteObs;
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, RngSnapshot, STREAM_EXPLORATION};
use crate::smoothing::{expected_utility, smooth, SmoothingStrategy};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct CbdqConfig {
    pub gamma: f64,
    pub alpha: AlphaSchedule,
    pub epsilon: EpsilonSchedule,
    pub smoothing: SmoothingStrategy,
    pub anneal: Option<SmoothingAnneal>,
    pub beta: BetaSchedule,
    pub partition: PartitionConfig,
}

impl CbdqConfig {
    fn validate(&self, n_actions: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::param(
                "gamma",
                format!("must lie strictly inside (0, 1), got {}", self.gamma),
            ));
        }
        self.alpha.validate()?;
        self.epsilon.validate()?;
        self.smoothing.validate(n_actions)?;
        self.beta.validate()?;
        if let Some(anneal) = &self.anneal {
            let initial = match &self.smoothing {
                SmoothingStrategy::Softmax { temperature }
                | SmoothingStrategy::ClippedSoftmax { temperature, .. }
                | SmoothingStrategy::BayesianSoftmax { temperature, .. } => *temperature,
                SmoothingStrategy::ClippedMax { tau } => *tau,
            };
            anneal.validate(initial)?;
        }
        self.partition.validate()?;
        match &self.partition.belief {
            BeliefMode::Discrete {
                n_actions: belief_actions,
                ..
            } if *belief_actions == n_actions => Ok(()),
            BeliefMode::Discrete { n_actions: got, .. } => Err(CoreError::param(
                "partition belief",
                format!("tracks {got} actions but the environment has {n_actions}"),
            )),
            BeliefMode::Gaussian { .. } => Err(CoreError::param(
                "partition belief",
                "CBDQ needs discrete category beliefs",
            )),
        }
    }
}

pub struct CbdqAgent {
    cfg: CbdqConfig,
    n_actions: usize,
    q: QTable,
    partition: Partition,
    rng: ChaCha12Rng,
    seed: u64,
    step_count: u64,
    episode_rewards: Vec<f64>,
}

impl CbdqAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: CbdqConfig, seed: u64) -> Result<Self> {
        cfg.validate(n_actions)?;
        Ok(CbdqAgent {
            partition: Partition::new(cfg.partition.clone())?,
            cfg,
            n_actions,
            q: QTable::new(n_states, n_actions)?,
            rng: stream_rng(seed, STREAM_EXPLORATION),
            seed,
            step_count: 0,
            episode_rewards: Vec::new(),
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn partition_ref(&self) -> &Partition {
        &self.partition
    }

    /// The fused action distribution the agent acts greedily against.
    fn blended(&self, state: usize, category: usize) -> Result<crate::smoothing::ActionDistribution> {
        let strategy = strategy_at(&self.cfg.smoothing, self.cfg.anneal.as_ref(), self.step_count);
        let smoothed = smooth(&strategy, self.q.row(state), Some(&self.episode_rewards))?;
        let prior = match self.partition.belief(category)? {
            CategoryBelief::Discrete(b) => b.distribution()?,
            CategoryBelief::Gaussian(_) => {
                return Err(CoreError::param(
                    "partition belief",
                    "CBDQ needs discrete category beliefs",
                ))
            }
        };
        let beta = self.cfg.beta.beta_at(self.step_count);
        fuse_discrete(&smoothed.dist, &prior, beta)
    }
}

impl DiscreteController for CbdqAgent {
    fn begin_episode(&mut self) {
        self.episode_rewards.clear();
    }

    fn select(&mut self, obs: &DiscreteObs) -> Result<SelectInfo> {
        let assignment = self.partition.observe(&obs.features)?;
        let epsilon = self.cfg.epsilon.epsilon_at(self.step_count);
        let beta = self.cfg.beta.beta_at(self.step_count);
        let u: f64 = self.rng.gen();
        let action = if u < epsilon {
            self.rng.gen_range(0..self.n_actions)
        } else {
            self.blended(obs.state_id, assignment.id)?.argmax()
        };
        // The category's belief records the executed action only after the
        // fused distribution has been computed, so a selection never sees
        // its own action in the prior.
        if let CategoryBelief::Discrete(b) = self.partition.belief_mut(assignment.id)? {
            b.observe(action)?;
        }
        Ok(SelectInfo {
            action,
            category: Some(assignment.id),
            beta,
            epsilon,
        })
    }

    fn update(
        &mut self,
        prev: &DiscreteObs,
        info: &SelectInfo,
        reward: f64,
        next: Option<&DiscreteObs>,
    ) -> Result<()> {
        self.episode_rewards.push(reward);
        let target = match next {
            None => reward,
            Some(next_obs) => {
                let category = info.category.ok_or_else(|| {
                    CoreError::param("select info", "CBDQ updates need the observed category")
                })?;
                let blend = self.blended(next_obs.state_id, category)?;
                reward
                    + self.cfg.gamma * expected_utility(&blend, self.q.row(next_obs.state_id))?
            }
        };
        let visit = self.q.record_visit(prev.state_id, info.action);
        let alpha = self.cfg.alpha.alpha(visit);
        self.q.update(prev.state_id, info.action, alpha, target);
        self.step_count += 1;
        Ok(())
    }

    fn q_abs_max(&self) -> f64 {
        self.q.max_abs()
    }

    fn partition(&self) -> Option<&Partition> {
        Some(&self.partition)
    }

    fn partition_mut(&mut self) -> Option<&mut Partition> {
        Some(&mut self.partition)
    }

    fn agent_state(&self) -> AgentState {
        AgentState::Q {
            n_states: self.q.n_states(),
            n_actions: self.q.n_actions(),
            q: self.q.values().to_vec(),
            visits: self.q.visits().to_vec(),
        }
    }

    fn rng_snapshots(&self) -> Vec<RngSnapshot> {
        vec![RngSnapshot::capture(STREAM_EXPLORATION, self.seed, &self.rng)]
    }

    fn step_count(&self) -> u64 {
        self.step_count
    }

    fn greedy_action(&self, obs: &DiscreteObs) -> Result<usize> {
        match self.partition.nearest(&obs.features) {
            Some((category, _)) => Ok(self.blended(obs.state_id, category)?.argmax()),
            None => {
                // Nothing clustered yet: fall back to the smoothed policy
                // alone, which is the beta = 0 limit of the blend.
                let strategy =
                    strategy_at(&self.cfg.smoothing, self.cfg.anneal.as_ref(), self.step_count);
                let smoothed =
                    smooth(&strategy, self.q.row(obs.state_id), Some(&self.episode_rewards))?;
                Ok(smoothed.dist.argmax())
            }
        }
    }
}

/// Plain epsilon-greedy Q-learning with the max backup. Kept structurally
/// in lockstep with [`CbdqAgent`] so seed-for-seed comparisons isolate the
/// smoothing/fusion machinery as the only difference.
pub struct QLearningAgent {
    gamma: f64,
    alpha: AlphaSchedule,
    epsilon: EpsilonSchedule,
    n_actions: usize,
    q: QTable,
    rng: ChaCha12Rng,
    seed: u64,
    step_count: u64,
}

impl QLearningAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        alpha: AlphaSchedule,
        epsilon: EpsilonSchedule,
        seed: u64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(CoreError::param(
                "gamma",
                format!("must lie strictly inside (0, 1), got {gamma}"),
            ));
        }
        alpha.validate()?;
        epsilon.validate()?;
        Ok(QLearningAgent {
            gamma,
            alpha,
            epsilon,
            n_actions,
            q: QTable::new(n_states, n_actions)?,
            rng: stream_rng(seed, STREAM_EXPLORATION),
            seed,
            step_count: 0,
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    fn greedy(&self, state: usize) -> usize {
        let row = self.q.row(state);
        let mut best = 0;
        for (i, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = i;
            }
        }
        best
    }
}

impl DiscreteController for QLearningAgent {
    fn begin_episode(&mut self) {}

    fn select(&mut self, obs: &DiscreteObs) -> Result<SelectInfo> {
        let epsilon = self.epsilon.epsilon_at(self.step_count);
        let u: f64 = self.rng.gen();
        let action = if u < epsilon {
            self.rng.gen_range(0..self.n_actions)
        } else {
            self.greedy(obs.state_id)
        };
        Ok(SelectInfo {
            action,
            category: None,
            beta: 0.0,
            epsilon,
        })
    }

    fn update(
        &mut self,
        prev: &DiscreteObs,
        info: &SelectInfo,
        reward: f64,
        next: Option<&DiscreteObs>,
    ) -> Result<()> {
        let target = match next {
            None => reward,
            Some(next_obs) => {
                let row = self.q.row(next_obs.state_id);
                let max = row[self.greedy(next_obs.state_id)];
                reward + self.gamma * max
            }
        };
        let visit = self.q.record_visit(prev.state_id, info.action);
        let alpha = self.alpha.alpha(visit);
        self.q.update(prev.state_id, info.action, alpha, target);
        self.step_count += 1;
        Ok(())
    }

    fn q_abs_max(&self) -> f64 {
        self.q.max_abs()
    }

    fn partition(&self) -> Option<&Partition> {
        None
    }

    fn partition_mut(&mut self) -> Option<&mut Partition> {
        None
    }

    fn agent_state(&self) -> AgentState {
        AgentState::Q {
            n_states: self.q.n_states(),
            n_actions: self.q.n_actions(),
            q: self.q.values().to_vec(),
            visits: self.q.visits().to_vec(),
        }
    }

    fn rng_snapshots(&self) -> Vec<RngSnapshot> {
        vec![RngSnapshot::capture(STREAM_EXPLORATION, self.seed, &self.rng)]
    }

    fn step_count(&self) -> u64 {
        self.step_count
    }

    fn greedy_action(&self, obs: &DiscreteObs) -> Result<usize> {
        Ok(self.greedy(obs.state_id))
    }
}
