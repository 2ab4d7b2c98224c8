//! Deterministic grid navigation with goal and hazard cells.

use super::{DiscreteActionEnv, DiscreteObs, EnvStep, ParamReader};
use crate::error::{CoreError, Result};
use crate::mdp::TabularMdp;
use crate::rng::{stream_rng, RngSnapshot, STREAM_ENV};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeSet;

/// Rectangular grid. Actions move one cell (0 = up, 1 = right, 2 = down,
/// 3 = left); bumping a wall leaves the position unchanged. Entering the
/// goal or a hazard ends the episode and the cell's reward *replaces* the
/// step penalty, so with the default `(+1, -1, -0.01)` every one-step
/// reward stays inside `[-1, 1]`.
pub struct GridWorld {
    width: usize,
    height: usize,
    start: (usize, usize),
    goal: (usize, usize),
    hazards: BTreeSet<(usize, usize)>,
    step_penalty: f64,
    goal_reward: f64,
    hazard_penalty: f64,
    max_steps: usize,
    pos: (usize, usize),
    steps: usize,
    finished: bool,
    seed: u64,
    // The dynamics are deterministic; the stream exists so the environment
    // contract (own RNG, snapshot in checkpoints) holds uniformly.
    rng: ChaCha12Rng,
}

impl GridWorld {
    pub fn from_params(reader: &mut ParamReader, seed: u64) -> Result<Self> {
        let width = reader.get_usize("width", 8)?;
        let height = reader.get_usize("height", 8)?;
        let start = single_cell(reader, "start", (0, 0))?;
        let goal = single_cell(reader, "goal", (height.saturating_sub(1), width.saturating_sub(1)))?;
        let hazards = reader.get_cells("hazards")?;
        GridWorld::new(
            width,
            height,
            start,
            goal,
            hazards,
            reader.get_f64("step_penalty", -0.01)?,
            reader.get_f64("goal_reward", 1.0)?,
            reader.get_f64("hazard_penalty", -1.0)?,
            reader.get_usize("max_steps", 200)?,
            seed,
        )
    }

    /// Classic 4x12 cliff: start bottom-left, goal bottom-right, the cells
    /// between them along the bottom row are hazards.
    pub fn cliff(reader: &mut ParamReader, seed: u64) -> Result<Self> {
        let hazards: Vec<(usize, usize)> = (1..=10).map(|c| (3, c)).collect();
        GridWorld::new(
            12,
            4,
            (3, 0),
            (3, 11),
            hazards,
            reader.get_f64("step_penalty", -0.01)?,
            reader.get_f64("goal_reward", 1.0)?,
            reader.get_f64("hazard_penalty", -1.0)?,
            reader.get_usize("max_steps", 200)?,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        start: (usize, usize),
        goal: (usize, usize),
        hazards: Vec<(usize, usize)>,
        step_penalty: f64,
        goal_reward: f64,
        hazard_penalty: f64,
        max_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(CoreError::param(
                "grid size",
                format!("need at least 2x2, got {height}x{width}"),
            ));
        }
        let in_bounds = |c: (usize, usize)| c.0 < height && c.1 < width;
        if !in_bounds(start) || !in_bounds(goal) {
            return Err(CoreError::param("start/goal", "cell outside the grid"));
        }
        if start == goal {
            return Err(CoreError::param("start/goal", "must differ"));
        }
        let hazard_set: BTreeSet<(usize, usize)> = hazards.into_iter().collect();
        for &cell in &hazard_set {
            if !in_bounds(cell) {
                return Err(CoreError::param(
                    "hazards",
                    format!("cell ({}, {}) outside the grid", cell.0, cell.1),
                ));
            }
            if cell == start || cell == goal {
                return Err(CoreError::param(
                    "hazards",
                    "may not cover the start or goal cell",
                ));
            }
        }
        for (name, v) in [
            ("step_penalty", step_penalty),
            ("goal_reward", goal_reward),
            ("hazard_penalty", hazard_penalty),
        ] {
            if !v.is_finite() {
                return Err(CoreError::param(name, "must be finite"));
            }
        }
        if max_steps == 0 {
            return Err(CoreError::param("max_steps", "must be positive"));
        }
        Ok(GridWorld {
            width,
            height,
            start,
            goal,
            hazards: hazard_set,
            step_penalty,
            goal_reward,
            hazard_penalty,
            max_steps,
            pos: start,
            steps: 0,
            finished: true,
            seed,
            rng: stream_rng(seed, STREAM_ENV),
        })
    }

    fn cell_id(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.width + cell.1
    }

    fn obs(&self, cell: (usize, usize)) -> DiscreteObs {
        DiscreteObs {
            state_id: self.cell_id(cell),
            features: vec![
                cell.1 as f64 / (self.width - 1) as f64,
                cell.0 as f64 / (self.height - 1) as f64,
            ],
        }
    }

    fn next_cell(&self, from: (usize, usize), action: usize) -> (usize, usize) {
        let (r, c) = from;
        match action {
            0 => (r.saturating_sub(1), c),
            1 => (r, (c + 1).min(self.width - 1)),
            2 => ((r + 1).min(self.height - 1), c),
            3 => (r, c.saturating_sub(1)),
            _ => unreachable!("validated before dispatch"),
        }
    }

    /// Reward for *entering* `cell`, and whether that ends the episode.
    fn enter(&self, cell: (usize, usize)) -> (f64, bool) {
        if cell == self.goal {
            (self.goal_reward, true)
        } else if self.hazards.contains(&cell) {
            (self.hazard_penalty, true)
        } else {
            (self.step_penalty, false)
        }
    }
}

impl DiscreteActionEnv for GridWorld {
    fn name(&self) -> &'static str {
        "gridworld"
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn n_states(&self) -> usize {
        self.width * self.height
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self) -> DiscreteObs {
        self.pos = self.start;
        self.steps = 0;
        self.finished = false;
        self.obs(self.pos)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep<DiscreteObs>> {
        if self.finished {
            return Err(CoreError::param(
                "episode",
                "step called on a finished episode; call reset first",
            ));
        }
        if action >= 4 {
            return Err(CoreError::param(
                "action",
                format!("must be in 0..4, got {action}"),
            ));
        }
        let next = self.next_cell(self.pos, action);
        let (reward, terminated) = self.enter(next);
        self.pos = next;
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.max_steps;
        self.finished = terminated || truncated;
        Ok(EnvStep {
            obs: self.obs(next),
            reward,
            terminated,
            truncated,
        })
    }

    fn tabular_view(&self, gamma: f64) -> Option<Result<TabularMdp>> {
        Some(self.build_mdp(gamma))
    }

    fn rng_snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(STREAM_ENV, self.seed, &self.rng)
    }
}

impl GridWorld {
    /// Exact MDP over cell ids: terminal cells become absorbing zero-reward
    /// states, everything else follows the deterministic movement rule. The
    /// step cap is a truncation device and deliberately absent here.
    fn build_mdp(&self, gamma: f64) -> Result<TabularMdp> {
        let n = self.n_states();
        let n_actions = 4;
        let mut transition = vec![0.0; n * n_actions * n];
        let mut reward = vec![0.0; n * n_actions];
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = (r, c);
                let s = self.cell_id(cell);
                let terminal = cell == self.goal || self.hazards.contains(&cell);
                for a in 0..n_actions {
                    let (s_next, rew) = if terminal {
                        (s, 0.0)
                    } else {
                        let next = self.next_cell(cell, a);
                        let (rew, _) = self.enter(next);
                        (self.cell_id(next), rew)
                    };
                    transition[(s * n_actions + a) * n + s_next] = 1.0;
                    reward[s * n_actions + a] = rew;
                }
            }
        }
        let mut initial = vec![0.0; n];
        initial[self.cell_id(self.start)] = 1.0;
        TabularMdp::new(n, n_actions, transition, reward, gamma, initial, 0)
    }
}

fn single_cell(
    reader: &mut ParamReader,
    key: &str,
    default: (usize, usize),
) -> Result<(usize, usize)> {
    let cells = reader.get_cells(key)?;
    match cells.len() {
        0 => Ok(default),
        1 => Ok(cells[0]),
        n => Err(CoreError::EnvParameter {
            key: key.to_string(),
            reason: format!("expected a single \"row,col\" cell, got {n}"),
        }),
    }
}
