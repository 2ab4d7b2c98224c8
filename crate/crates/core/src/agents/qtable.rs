//! Dense tabular action-value storage with per-pair visit counts.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(CoreError::param(
                "q table shape",
                format!("need at least one state and action, got {n_states}x{n_actions}"),
            ));
        }
        Ok(QTable {
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let base = state * self.n_actions;
        &self.q[base..base + self.n_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    /// Increments the visit count for `(state, action)` and returns the new
    /// count (so the first visit reports 1).
    pub fn record_visit(&mut self, state: usize, action: usize) -> u64 {
        let idx = state * self.n_actions + action;
        self.visits[idx] += 1;
        self.visits[idx]
    }

    pub fn visit_count(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.n_actions + action]
    }

    /// `q += alpha * (target - q)`.
    pub fn update(&mut self, state: usize, action: usize, alpha: f64, target: f64) {
        let idx = state * self.n_actions + action;
        self.q[idx] += alpha * (target - self.q[idx]);
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        q: Vec<f64>,
        visits: Vec<u64>,
    ) -> Result<Self> {
        if q.len() != n_states * n_actions || visits.len() != q.len() {
            return Err(CoreError::DimensionMismatch {
                context: "q table restore",
                left: q.len(),
                right: n_states * n_actions,
            });
        }
        Ok(QTable {
            n_states,
            n_actions,
            q,
            visits,
        })
    }
}
