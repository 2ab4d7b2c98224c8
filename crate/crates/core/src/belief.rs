//! Experience-derived beliefs and their fusion with value/policy outputs.
//!
//! Beliefs live on conceptual categories (see [`crate::ccf`]) and come in two
//! shapes: [`DiscreteBelief`] counts executed actions and exposes a
//! Laplace-smoothed frequency distribution; [`GaussianBelief`] tracks a
//! diagonal Gaussian over continuous actions via conjugate updates. Fusion is
//! the convex combination `b = (1 - beta) * policy_part + beta * belief_part`
//! with `beta` produced by a [`BetaSchedule`].

use crate::error::{ensure_finite, CoreError, Result};
use crate::smoothing::ActionDistribution;
use serde::{Deserialize, Serialize};

/// Default lower bound applied to Gaussian belief variances.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;

/// Action-frequency belief with Laplace smoothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteBelief {
    counts: Vec<u64>,
    laplace: f64,
}

impl DiscreteBelief {
    /// `laplace` is the pseudo-count added to every action; it must be
    /// positive if you want a well-defined distribution before any updates.
    pub fn new(n_actions: usize, laplace: f64) -> Result<Self> {
        if n_actions == 0 {
            return Err(CoreError::EmptyInput("discrete belief"));
        }
        if !laplace.is_finite() || laplace < 0.0 {
            return Err(CoreError::param(
                "laplace",
                format!("must be finite and non-negative, got {laplace}"),
            ));
        }
        Ok(DiscreteBelief {
            counts: vec![0; n_actions],
            laplace,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Records one executed action.
    pub fn observe(&mut self, action: usize) -> Result<()> {
        if action >= self.counts.len() {
            return Err(CoreError::param(
                "action",
                format!(
                    "action {action} out of range for {} actions",
                    self.counts.len()
                ),
            ));
        }
        self.counts[action] += 1;
        Ok(())
    }

    /// Laplace-smoothed frequencies `(count_a + laplace) / (total + n*laplace)`.
    pub fn distribution(&self) -> Result<ActionDistribution> {
        let total = self.total() as f64 + self.laplace * self.counts.len() as f64;
        if total <= 0.0 {
            return Err(CoreError::param(
                "laplace",
                "belief distribution undefined: zero counts and zero laplace mass",
            ));
        }
        ActionDistribution::new(
            self.counts
                .iter()
                .map(|c| (*c as f64 + self.laplace) / total)
                .collect(),
        )
    }
}

/// Diagonal Gaussian belief over a continuous action vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianBelief {
    mean: Vec<f64>,
    var: Vec<f64>,
    obs_count: u64,
    var_floor: f64,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, var: Vec<f64>, var_floor: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(CoreError::EmptyInput("gaussian belief mean"));
        }
        if mean.len() != var.len() {
            return Err(CoreError::DimensionMismatch {
                context: "gaussian belief",
                left: mean.len(),
                right: var.len(),
            });
        }
        ensure_finite("gaussian belief mean", &mean)?;
        ensure_finite("gaussian belief variance", &var)?;
        if !(var_floor > 0.0) || !var_floor.is_finite() {
            return Err(CoreError::param(
                "var_floor",
                format!("must be positive, got {var_floor}"),
            ));
        }
        if var.iter().any(|v| *v < var_floor) {
            return Err(CoreError::param(
                "var",
                format!("every variance must be at least the floor {var_floor:e}"),
            ));
        }
        Ok(GaussianBelief {
            mean,
            var,
            obs_count: 0,
            var_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn obs_count(&self) -> u64 {
        self.obs_count
    }

    pub fn var_floor(&self) -> f64 {
        self.var_floor
    }

    /// Conjugate update with one observation of variance `obs_var`:
    ///
    /// ```text
    /// mean' = (var * obs_mean + obs_var * mean) / (var + obs_var)
    /// var'  = var * obs_var / (var + obs_var)      (floored)
    /// ```
    ///
    /// Returns the updated belief; the receiver is untouched.
    pub fn posterior(&self, obs_mean: &[f64], obs_var: f64) -> Result<GaussianBelief> {
        if obs_mean.len() != self.mean.len() {
            return Err(CoreError::DimensionMismatch {
                context: "gaussian belief update",
                left: self.mean.len(),
                right: obs_mean.len(),
            });
        }
        ensure_finite("observation mean", obs_mean)?;
        if !(obs_var > 0.0) || !obs_var.is_finite() {
            return Err(CoreError::param(
                "obs_var",
                format!("must be positive, got {obs_var}"),
            ));
        }
        let mut mean = Vec::with_capacity(self.mean.len());
        let mut var = Vec::with_capacity(self.var.len());
        for i in 0..self.mean.len() {
            let vp = self.var[i];
            mean.push((vp * obs_mean[i] + obs_var * self.mean[i]) / (vp + obs_var));
            var.push((vp * obs_var / (vp + obs_var)).max(self.var_floor));
        }
        Ok(GaussianBelief {
            mean,
            var,
            obs_count: self.obs_count + 1,
            var_floor: self.var_floor,
        })
    }

    /// Log density of `x` under this belief (see [`gaussian_log_density`]).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        gaussian_log_density(x, &self.mean, &self.var, self.var_floor)
    }
}

/// `b = (1 - beta) * z + beta * p`, elementwise. The two-product form keeps
/// both endpoints exact: `beta = 0` returns `z` bit-for-bit and `beta = 1`
/// returns `p` bit-for-bit.
pub fn fuse_discrete(
    z: &ActionDistribution,
    p: &ActionDistribution,
    beta: f64,
) -> Result<ActionDistribution> {
    if z.len() != p.len() {
        return Err(CoreError::DimensionMismatch {
            context: "discrete fusion",
            left: z.len(),
            right: p.len(),
        });
    }
    require_beta(beta)?;
    ActionDistribution::new(
        z.probs()
            .iter()
            .zip(p.probs())
            .map(|(a, b)| (1.0 - beta) * a + beta * b)
            .collect(),
    )
}

/// Blends a Gaussian policy head with a Gaussian belief, elementwise:
/// means and *variances* combine convexly. Uses the additive form
/// `x + beta * (y - x)` so fusing identical inputs returns them exactly for
/// every beta (and `beta = 0` is exact).
pub fn fuse_gaussian(
    policy_mean: &[f64],
    policy_var: &[f64],
    belief: &GaussianBelief,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if policy_mean.len() != policy_var.len() {
        return Err(CoreError::DimensionMismatch {
            context: "gaussian fusion policy head",
            left: policy_mean.len(),
            right: policy_var.len(),
        });
    }
    if policy_mean.len() != belief.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "gaussian fusion",
            left: policy_mean.len(),
            right: belief.dim(),
        });
    }
    ensure_finite("policy mean", policy_mean)?;
    ensure_finite("policy variance", policy_var)?;
    if policy_var.iter().any(|v| *v < 0.0) {
        return Err(CoreError::param("policy_var", "negative variance"));
    }
    require_beta(beta)?;
    let mean = policy_mean
        .iter()
        .zip(belief.mean())
        .map(|(pm, bm)| pm + beta * (bm - pm))
        .collect();
    let var = policy_var
        .iter()
        .zip(belief.var())
        .map(|(pv, bv)| pv + beta * (bv - pv))
        .collect();
    Ok((mean, var))
}

/// Diagonal Gaussian log density:
/// `sum_i -0.5 * ((x_i - mean_i)^2 / var_i + ln var_i + ln 2*pi)`.
///
/// Every variance must already sit at or above `var_floor`.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], var: &[f64], var_floor: f64) -> Result<f64> {
    if x.len() != mean.len() || mean.len() != var.len() {
        return Err(CoreError::DimensionMismatch {
            context: "gaussian log density",
            left: x.len(),
            right: mean.len(),
        });
    }
    if x.is_empty() {
        return Err(CoreError::EmptyInput("gaussian log density"));
    }
    ensure_finite("log density point", x)?;
    ensure_finite("log density mean", mean)?;
    ensure_finite("log density variance", var)?;
    if var.iter().any(|v| *v < var_floor) {
        return Err(CoreError::param(
            "var",
            format!("variance below floor {var_floor:e} in log density"),
        ));
    }
    const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)
    let mut total = 0.0;
    for i in 0..x.len() {
        let d = x[i] - mean[i];
        total += -0.5 * (d * d / var[i] + var[i].ln() + LN_2PI);
    }
    Ok(total)
}

/// Time course of the fusion weight `beta_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaSchedule {
    Constant(f64),
    /// Moves from `beta0` toward `beta_star` by `rate` per step, saturating
    /// at `beta_star` (works in both directions).
    LinearRamp {
        beta0: f64,
        beta_star: f64,
        rate: f64,
    },
    /// `beta_star + (beta0 - beta_star) * exp(-rate * t)`.
    ExponentialDecay {
        beta0: f64,
        beta_star: f64,
        rate: f64,
    },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &'static str, v: f64| -> Result<()> {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(CoreError::param(name, format!("must lie in [0, 1], got {v}")));
            }
            Ok(())
        };
        match self {
            BetaSchedule::Constant(b) => check_unit("beta", *b),
            BetaSchedule::LinearRamp {
                beta0,
                beta_star,
                rate,
            }
            | BetaSchedule::ExponentialDecay {
                beta0,
                beta_star,
                rate,
            } => {
                check_unit("beta0", *beta0)?;
                check_unit("beta_star", *beta_star)?;
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(CoreError::param(
                        "rate",
                        format!("must be finite and non-negative, got {rate}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Fusion weight at step `t`. Always in [0, 1] and monotone in `t`.
    pub fn beta_at(&self, t: u64) -> f64 {
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::LinearRamp {
                beta0,
                beta_star,
                rate,
            } => {
                let drift = rate * t as f64;
                if beta_star >= beta0 {
                    (beta0 + drift).min(*beta_star)
                } else {
                    (beta0 - drift).max(*beta_star)
                }
            }
            BetaSchedule::ExponentialDecay {
                beta0,
                beta_star,
                rate,
            } => beta_star + (beta0 - beta_star) * (-rate * t as f64).exp(),
        }
    }
}

fn require_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::param(
            "beta",
            format!("must lie in [0, 1], got {beta}"),
        ));
    }
    Ok(())
}
