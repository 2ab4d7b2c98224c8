//! Linear function approximators for the on-policy and actor-critic agents.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Numerically stable softmax at unit temperature.
pub fn stable_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Feature construction from an environment observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureExtractor {
    /// Indicator vector over state ids (tabular function approximation).
    OneHot { n_states: usize },
    /// The observation itself with a trailing constant 1.
    RawWithBias { input_dim: usize },
}

impl FeatureExtractor {
    pub fn dim(&self) -> usize {
        match self {
            FeatureExtractor::OneHot { n_states } => *n_states,
            FeatureExtractor::RawWithBias { input_dim } => input_dim + 1,
        }
    }

    pub fn extract(&self, state_id: usize, raw: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureExtractor::OneHot { n_states } => {
                if state_id >= *n_states {
                    return Err(CoreError::param(
                        "state_id",
                        format!("{state_id} out of range for {n_states} states"),
                    ));
                }
                let mut phi = vec![0.0; *n_states];
                phi[state_id] = 1.0;
                Ok(phi)
            }
            FeatureExtractor::RawWithBias { input_dim } => {
                if raw.len() != *input_dim {
                    return Err(CoreError::DimensionMismatch {
                        context: "raw features",
                        left: raw.len(),
                        right: *input_dim,
                    });
                }
                let mut phi = raw.to_vec();
                phi.push(1.0);
                Ok(phi)
            }
        }
    }
}

/// `pi(a|s) = softmax(W phi(s))` with `W` stored row-major as
/// `w[action * n_features + feature]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxPolicy {
    pub n_features: usize,
    pub n_actions: usize,
    pub w: Vec<f64>,
}

impl LinearSoftmaxPolicy {
    pub fn new(n_features: usize, n_actions: usize) -> Result<Self> {
        if n_features == 0 || n_actions == 0 {
            return Err(CoreError::param(
                "policy shape",
                "need at least one feature and action",
            ));
        }
        Ok(LinearSoftmaxPolicy {
            n_features,
            n_actions,
            w: vec![0.0; n_features * n_actions],
        })
    }

    pub fn logits(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.n_features {
            return Err(CoreError::DimensionMismatch {
                context: "policy features",
                left: phi.len(),
                right: self.n_features,
            });
        }
        Ok(logits_of(&self.w, phi, self.n_actions))
    }

    pub fn probs(&self, phi: &[f64]) -> Result<Vec<f64>> {
        Ok(stable_softmax(&self.logits(phi)?))
    }
}

/// Logits of a row-major `[n_actions x n_features]` weight matrix.
pub fn logits_of(w: &[f64], phi: &[f64], n_actions: usize) -> Vec<f64> {
    let n_features = phi.len();
    (0..n_actions)
        .map(|a| {
            let row = &w[a * n_features..(a + 1) * n_features];
            row.iter().zip(phi).map(|(wi, xi)| wi * xi).sum()
        })
        .collect()
}

/// `v(s) = w . phi(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearValue {
    pub w: Vec<f64>,
}

impl LinearValue {
    pub fn new(n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(CoreError::param("value shape", "need at least one feature"));
        }
        Ok(LinearValue {
            w: vec![0.0; n_features],
        })
    }

    pub fn value(&self, phi: &[f64]) -> Result<f64> {
        if phi.len() != self.w.len() {
            return Err(CoreError::DimensionMismatch {
                context: "value features",
                left: phi.len(),
                right: self.w.len(),
            });
        }
        Ok(self.w.iter().zip(phi).map(|(w, x)| w * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Diagonal Gaussian policy: `mean = W phi(s)` per action dimension plus a
/// state-independent log standard deviation per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianPolicy {
    pub n_features: usize,
    pub action_dim: usize,
    /// Row-major `[action_dim x n_features]`.
    pub w_mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl LinearGaussianPolicy {
    pub fn new(n_features: usize, action_dim: usize, initial_log_std: f64) -> Result<Self> {
        if n_features == 0 || action_dim == 0 {
            return Err(CoreError::param(
                "policy shape",
                "need at least one feature and action dimension",
            ));
        }
        if !initial_log_std.is_finite() {
            return Err(CoreError::param("log_std", "must be finite"));
        }
        Ok(LinearGaussianPolicy {
            n_features,
            action_dim,
            w_mean: vec![0.0; n_features * action_dim],
            log_std: vec![initial_log_std; action_dim],
        })
    }

    pub fn mean(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.n_features {
            return Err(CoreError::DimensionMismatch {
                context: "policy features",
                left: phi.len(),
                right: self.n_features,
            });
        }
        Ok(logits_of(&self.w_mean, phi, self.action_dim))
    }

    pub fn variances(&self) -> Vec<f64> {
        self.log_std.iter().map(|ls| (2.0 * ls).exp()).collect()
    }
}
