//! One-dimensional continuous reaching: drive the point to the target.

use super::{ContinuousActionEnv, EnvStep, ParamReader};
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, RngSnapshot, STREAM_ENV};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

const DT: f64 = 0.1;

/// Position starts at 0 and integrates the (clamped) action at `dt = 0.1`,
/// staying inside `[-1, 1]`. The target is drawn uniformly on `(-1, 1)` at
/// reset. Reward is `-|pos - target|`; episodes truncate after `max_steps`
/// (default 100) and never terminate early. Observation: `[pos, target]`.
pub struct Reach1d {
    pos: f64,
    target: f64,
    steps: usize,
    max_steps: usize,
    finished: bool,
    seed: u64,
    rng: ChaCha12Rng,
}

impl Reach1d {
    pub fn from_params(reader: &mut ParamReader, seed: u64) -> Result<Self> {
        let max_steps = reader.get_usize("max_steps", 100)?;
        Reach1d::new(max_steps, seed)
    }

    pub fn new(max_steps: usize, seed: u64) -> Result<Self> {
        if max_steps == 0 {
            return Err(CoreError::param("max_steps", "must be positive"));
        }
        Ok(Reach1d {
            pos: 0.0,
            target: 0.0,
            steps: 0,
            max_steps,
            finished: true,
            seed,
            rng: stream_rng(seed, STREAM_ENV),
        })
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos, self.target]
    }
}

impl ContinuousActionEnv for Reach1d {
    fn name(&self) -> &'static str {
        "reach1d"
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        1.0
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pos = 0.0;
        self.target = self.rng.gen_range(-1.0..1.0);
        self.steps = 0;
        self.finished = false;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep<Vec<f64>>> {
        if self.finished {
            return Err(CoreError::param(
                "episode",
                "step called on a finished episode; call reset first",
            ));
        }
        if action.len() != 1 {
            return Err(CoreError::DimensionMismatch {
                context: "reach1d action",
                left: action.len(),
                right: 1,
            });
        }
        if !action[0].is_finite() {
            return Err(CoreError::NonFinite {
                context: "reach1d action",
            });
        }
        let a = action[0].clamp(-1.0, 1.0);
        self.pos = (self.pos + DT * a).clamp(-1.0, 1.0);
        self.steps += 1;
        let truncated = self.steps >= self.max_steps;
        self.finished = truncated;
        Ok(EnvStep {
            obs: self.obs(),
            reward: -(self.pos - self.target).abs(),
            terminated: false,
            truncated,
        })
    }

    fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(STREAM_ENV, self.seed, &self.rng)
    }
}
