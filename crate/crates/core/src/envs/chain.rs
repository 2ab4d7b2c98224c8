//! A deterministic corridor: walk right to the goal.

use super::{DiscreteActionEnv, DiscreteObs, EnvStep, ParamReader};
use crate::error::{CoreError, Result};
use crate::mdp::TabularMdp;
use crate::rng::{stream_rng, RngSnapshot, STREAM_ENV};
use rand_chacha::ChaCha12Rng;

/// States `0..n`, start at 0, terminal goal at `n - 1`. Action 0 moves left
/// (clamped at 0), action 1 moves right. Entering the goal pays 1; every
/// other step pays 0. The step cap defaults to `4 * n`.
pub struct Chain {
    n: usize,
    max_steps: usize,
    pos: usize,
    steps: usize,
    finished: bool,
    seed: u64,
    rng: ChaCha12Rng,
}

impl Chain {
    pub fn from_params(reader: &mut ParamReader, seed: u64) -> Result<Self> {
        let n = reader.get_usize("n", 10)?;
        let max_steps = reader.get_usize("max_steps", 4 * n.max(1))?;
        Chain::new(n, max_steps, seed)
    }

    pub fn new(n: usize, max_steps: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::param("n", format!("need at least 2 states, got {n}")));
        }
        if max_steps == 0 {
            return Err(CoreError::param("max_steps", "must be positive"));
        }
        Ok(Chain {
            n,
            max_steps,
            pos: 0,
            steps: 0,
            finished: true,
            seed,
            rng: stream_rng(seed, STREAM_ENV),
        })
    }

    fn obs(&self, pos: usize) -> DiscreteObs {
        DiscreteObs {
            state_id: pos,
            features: vec![pos as f64 / (self.n - 1) as f64],
        }
    }
}

impl DiscreteActionEnv for Chain {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn n_states(&self) -> usize {
        self.n
    }

    fn feature_dim(&self) -> usize {
        1
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self) -> DiscreteObs {
        self.pos = 0;
        self.steps = 0;
        self.finished = false;
        self.obs(0)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep<DiscreteObs>> {
        if self.finished {
            return Err(CoreError::param(
                "episode",
                "step called on a finished episode; call reset first",
            ));
        }
        if action >= 2 {
            return Err(CoreError::param(
                "action",
                format!("must be 0 or 1, got {action}"),
            ));
        }
        self.pos = match action {
            0 => self.pos.saturating_sub(1),
            _ => (self.pos + 1).min(self.n - 1),
        };
        let terminated = self.pos == self.n - 1;
        let reward = if terminated { 1.0 } else { 0.0 };
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.max_steps;
        self.finished = terminated || truncated;
        Ok(EnvStep {
            obs: self.obs(self.pos),
            reward,
            terminated,
            truncated,
        })
    }

    fn tabular_view(&self, gamma: f64) -> Option<Result<TabularMdp>> {
        let n = self.n;
        let mut transition = vec![0.0; n * 2 * n];
        let mut reward = vec![0.0; n * 2];
        for s in 0..n {
            for a in 0..2 {
                let next = if s == n - 1 {
                    s // absorbing goal
                } else if a == 0 {
                    s.saturating_sub(1)
                } else {
                    s + 1
                };
                transition[(s * 2 + a) * n + next] = 1.0;
                reward[s * 2 + a] = if s != n - 1 && next == n - 1 { 1.0 } else { 0.0 };
            }
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Some(TabularMdp::new(n, 2, transition, reward, gamma, initial, 0))
    }

    fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(STREAM_ENV, self.seed, &self.rng)
    }
}
