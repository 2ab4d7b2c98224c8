//! Cart-pole balancing with the standard published constants.

use super::{DiscreteActionEnv, DiscreteObs, EnvStep, ParamReader};
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, RngSnapshot, STREAM_ENV};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;

const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;

// Velocity clamp bounds used only for feature normalization and tiling;
// the dynamics themselves are unclamped.
const XDOT_CLAMP: f64 = 3.0;
const THETADOT_CLAMP: f64 = 3.5;

const BINS_PER_DIM: usize = 8;

/// One explicit-Euler step of the cart-pole dynamics under a horizontal
/// `force`. State layout: `[x, x_dot, theta, theta_dot]`.
pub fn cartpole_dynamics(state: [f64; 4], force: f64) -> [f64; 4] {
    let [x, x_dot, theta, theta_dot] = state;
    let cos_theta = theta.cos();
    let sin_theta = theta.sin();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
        / (POLE_HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_theta * cos_theta / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS;
    [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ]
}

/// Two actions: 0 pushes left, 1 pushes right, both at 10 N. The episode
/// ends when `|x| > 2.4` or `|theta| > 12 degrees`, and truncates at the
/// step cap (default 500). Reward is +1 per step, including the failing
/// one. Initial state components are i.i.d. uniform on `[-0.05, 0.05]`.
pub struct CartPole {
    state: [f64; 4],
    steps: usize,
    max_steps: usize,
    finished: bool,
    seed: u64,
    rng: ChaCha12Rng,
}

impl CartPole {
    pub fn from_params(reader: &mut ParamReader, seed: u64) -> Result<Self> {
        let max_steps = reader.get_usize("max_steps", 500)?;
        CartPole::new(max_steps, seed)
    }

    pub fn new(max_steps: usize, seed: u64) -> Result<Self> {
        if max_steps == 0 {
            return Err(CoreError::param("max_steps", "must be positive"));
        }
        Ok(CartPole {
            state: [0.0; 4],
            steps: 0,
            max_steps,
            finished: true,
            seed,
            rng: stream_rng(seed, STREAM_ENV),
        })
    }

    /// Features in `[-1, 1]`: positions scaled by their failure thresholds,
    /// velocities clamped to fixed bounds and scaled.
    pub fn features(state: &[f64; 4]) -> Vec<f64> {
        vec![
            state[0] / X_THRESHOLD,
            state[1].clamp(-XDOT_CLAMP, XDOT_CLAMP) / XDOT_CLAMP,
            state[2] / THETA_THRESHOLD,
            state[3].clamp(-THETADOT_CLAMP, THETADOT_CLAMP) / THETADOT_CLAMP,
        ]
    }

    /// Tile code: 8 bins per normalized dimension, row-major over the four
    /// dimensions, giving ids in `0..4096`.
    pub fn state_id(state: &[f64; 4]) -> usize {
        let mut id = 0;
        let mut stride = 1;
        for f in Self::features(state) {
            let unit = (f + 1.0) / 2.0;
            let bin = ((unit * BINS_PER_DIM as f64) as usize).min(BINS_PER_DIM - 1);
            id += bin * stride;
            stride *= BINS_PER_DIM;
        }
        id
    }

    fn obs(&self) -> DiscreteObs {
        DiscreteObs {
            state_id: Self::state_id(&self.state),
            features: Self::features(&self.state),
        }
    }

    fn failed(&self) -> bool {
        self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD
    }
}

impl DiscreteActionEnv for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn n_states(&self) -> usize {
        BINS_PER_DIM.pow(4)
    }

    fn feature_dim(&self) -> usize {
        4
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self) -> DiscreteObs {
        for v in self.state.iter_mut() {
            *v = self.rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.finished = false;
        self.obs()
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
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = cartpole_dynamics(self.state, force);
        self.steps += 1;
        let terminated = self.failed();
        let truncated = !terminated && self.steps >= self.max_steps;
        self.finished = terminated || truncated;
        Ok(EnvStep {
            obs: self.obs(),
            reward: 1.0,
            terminated,
            truncated,
        })
    }

    fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(STREAM_ENV, self.seed, &self.rng)
    }
}
