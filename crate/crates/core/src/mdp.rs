//! Exact tabular MDP models and value iteration.
//!
//! These are the oracle side of the toolkit: environments that admit an exact
//! model expose a [`TabularMdp`], and [`TabularMdp::value_iteration`] produces
//! the `Q*` that learned tables are measured against.

use crate::error::{ensure_finite, CoreError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance for "this row is a probability distribution" checks.
const PROB_SUM_TOL: f64 = 1e-9;

/// Hard cap on value-iteration sweeps before reporting non-convergence.
const MAX_SWEEPS: usize = 1_000_000;

/// A finite MDP with dense transition and reward tables.
///
/// * `transition` is row-major `[state][action][next_state]`, each row a
///   probability distribution (validated to within 1e-9).
/// * `reward` is `[state][action]`, finite.
/// * `initial_dist` is a distribution over start states.
/// * `horizon` of 0 means infinite / terminate-by-absorbing-state; a positive
///   value is the episode cap a simulator should truncate at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    initial_dist: Vec<f64>,
    horizon: u64,
}

/// Output of [`TabularMdp::value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    /// Row-major `[state][action]` optimal action values.
    pub q: Vec<f64>,
    /// `V*(s) = max_a Q*(s, a)`.
    pub v: Vec<f64>,
    /// Sweeps performed.
    pub iterations: usize,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial_dist: Vec<f64>,
        horizon: u64,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(CoreError::param("n_states", "must be positive"));
        }
        if n_actions == 0 {
            return Err(CoreError::param("n_actions", "must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(CoreError::param(
                "gamma",
                format!("must lie strictly inside (0, 1), got {gamma}"),
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(CoreError::DimensionMismatch {
                context: "transition table",
                left: transition.len(),
                right: n_states * n_actions * n_states,
            });
        }
        if reward.len() != n_states * n_actions {
            return Err(CoreError::DimensionMismatch {
                context: "reward table",
                left: reward.len(),
                right: n_states * n_actions,
            });
        }
        if initial_dist.len() != n_states {
            return Err(CoreError::DimensionMismatch {
                context: "initial distribution",
                left: initial_dist.len(),
                right: n_states,
            });
        }
        ensure_finite("transition table", &transition)?;
        ensure_finite("reward table", &reward)?;
        ensure_finite("initial distribution", &initial_dist)?;
        check_distribution("initial distribution", &initial_dist)?;
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
            horizon,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                check_distribution("transition row", mdp.transition_row(s, a))?;
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.n_actions + action]
    }

    /// Largest absolute one-step reward; the `R_max` in `R_max / (1 - gamma)`.
    pub fn reward_bound(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.n_actions + action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// One exact Bellman optimality backup of the whole table:
    /// `(TQ)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) * max_a' Q(s',a')`.
    pub fn backup(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n_states * self.n_actions {
            return Err(CoreError::DimensionMismatch {
                context: "q table in backup",
                left: q.len(),
                right: self.n_states * self.n_actions,
            });
        }
        let v: Vec<f64> = (0..self.n_states)
            .map(|s| row_max(&q[s * self.n_actions..(s + 1) * self.n_actions]))
            .collect();
        let mut out = vec![0.0; q.len()];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let mut exp_v = 0.0;
                for (s_next, p) in row.iter().enumerate() {
                    if *p > 0.0 {
                        exp_v += p * v[s_next];
                    }
                }
                out[s * self.n_actions + a] = self.reward(s, a) + self.gamma * exp_v;
            }
        }
        Ok(out)
    }

    /// Iterates exact backups until the sup-norm change of a sweep is at most
    /// `tol`. The returned table then satisfies `||Q - TQ||_inf <= gamma*tol`,
    /// i.e. one further exact backup changes no entry by more than `tol`.
    pub fn value_iteration(&self, tol: f64) -> Result<ValueIterationResult> {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(CoreError::param("tol", format!("must be positive, got {tol}")));
        }
        let mut q = vec![0.0; self.n_states * self.n_actions];
        let mut residual = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            let next = self.backup(&q)?;
            residual = q
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            q = next;
            if residual <= tol {
                let v = (0..self.n_states)
                    .map(|s| row_max(&q[s * self.n_actions..(s + 1) * self.n_actions]))
                    .collect();
                return Ok(ValueIterationResult {
                    q,
                    v,
                    iterations: sweep,
                    residual,
                });
            }
        }
        Err(CoreError::NonConvergence {
            residual,
            iterations: MAX_SWEEPS,
        })
    }

    /// Random MDP with deterministic transitions: action 0 steps along a
    /// cycle through all states (so everything stays reachable), remaining
    /// actions jump to a uniformly drawn successor. Rewards are i.i.d.
    /// uniform on [-1, 1]. Intended for tests and benchmarks.
    pub fn random_deterministic<R: Rng>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut reward = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            for a in 0..n_actions {
                let next = if a == 0 {
                    (s + 1) % n_states
                } else {
                    rng.gen_range(0..n_states)
                };
                transition[(s * n_actions + a) * n_states + next] = 1.0;
                reward[s * n_actions + a] = rng.gen_range(-1.0..=1.0);
            }
        }
        let initial = vec![1.0 / n_states as f64; n_states];
        TabularMdp::new(n_states, n_actions, transition, reward, gamma, initial, 0)
    }

    /// Random MDP with stochastic transitions over `support` successors per
    /// state-action pair. Rewards are i.i.d. uniform on [-1, 1].
    pub fn random_stochastic<R: Rng>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        support: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if support == 0 || support > n_states {
            return Err(CoreError::param(
                "support",
                format!("must be in 1..={n_states}, got {support}"),
            ));
        }
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut reward = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            for a in 0..n_actions {
                // Draw `support` distinct successors, then positive weights.
                let mut successors: Vec<usize> = (0..n_states).collect();
                for i in 0..support {
                    let j = rng.gen_range(i..n_states);
                    successors.swap(i, j);
                }
                let weights: Vec<f64> = (0..support).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = weights.iter().sum();
                for (k, s_next) in successors[..support].iter().enumerate() {
                    transition[(s * n_actions + a) * n_states + s_next] = weights[k] / total;
                }
                reward[s * n_actions + a] = rng.gen_range(-1.0..=1.0);
            }
        }
        let initial = vec![1.0 / n_states as f64; n_states];
        TabularMdp::new(n_states, n_actions, transition, reward, gamma, initial, 0)
    }
}

/// `R_max / (1 - gamma)`: every discounted return, and hence every optimal
/// action value, lies within this bound when one-step rewards stay within
/// `[-r_max, r_max]`.
pub fn q_upper_bound(r_max: f64, gamma: f64) -> Result<f64> {
    if !(r_max >= 0.0) || !r_max.is_finite() {
        return Err(CoreError::param(
            "r_max",
            format!("must be finite and non-negative, got {r_max}"),
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CoreError::param(
            "gamma",
            format!("must lie strictly inside (0, 1), got {gamma}"),
        ));
    }
    Ok(r_max / (1.0 - gamma))
}

fn check_distribution(context: &'static str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| *p < 0.0) {
        return Err(CoreError::param(
            "probability",
            format!("{context} has a negative entry"),
        ));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(CoreError::param(
            "probability",
            format!("{context} sums to {sum}, expected 1 within {PROB_SUM_TOL:e}"),
        ));
    }
    Ok(())
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
}
