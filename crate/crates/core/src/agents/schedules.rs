//! Step-indexed schedules for learning rates, exploration, and smoothing
//! sharpness.

use crate::error::{CoreError, Result};
use crate::smoothing::SmoothingStrategy;
use serde::{Deserialize, Serialize};

/// Learning-rate schedule for tabular value updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `1 / N(s, a)` where the count includes the current visit, so the
    /// first update has rate 1 and the value becomes a running average of
    /// targets.
    InverseVisit,
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            AlphaSchedule::Constant(a) if !(*a > 0.0 && *a <= 1.0) => Err(CoreError::param(
                "alpha",
                format!("constant rate must be in (0, 1], got {a}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn alpha(&self, visit_count: u64) -> f64 {
        match self {
            AlphaSchedule::Constant(a) => *a,
            AlphaSchedule::InverseVisit => 1.0 / visit_count.max(1) as f64,
        }
    }
}

/// Linear exploration decay: `start` at step 0 falling to `end` at
/// `decay_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(value: f64) -> Self {
        EpsilonSchedule {
            start: value,
            end: value,
            decay_steps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon start", self.start), ("epsilon end", self.end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::param(
                    name,
                    format!("must be in [0, 1], got {v}"),
                ));
            }
        }
        if self.end > self.start {
            return Err(CoreError::param(
                "epsilon",
                "end must not exceed start (exploration decays)",
            ));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnealKind {
    /// Multiplicative interpolation; natural for temperatures spanning
    /// orders of magnitude. Requires positive endpoints.
    Geometric,
    Linear,
}

/// Anneals the sharpness parameter of a smoothing strategy (softmax
/// temperature or clipped-max mass) from its configured initial value to
/// `final_value` over `steps`, then holds. Annealing toward zero recovers
/// the classical greedy backup in the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingAnneal {
    pub final_value: f64,
    pub steps: u64,
    pub kind: AnnealKind,
}

impl SmoothingAnneal {
    pub fn validate(&self, initial: f64) -> Result<()> {
        if self.steps == 0 {
            return Err(CoreError::param("anneal steps", "must be positive"));
        }
        if !self.final_value.is_finite() || self.final_value < 0.0 {
            return Err(CoreError::param(
                "anneal final value",
                format!("must be finite and non-negative, got {}", self.final_value),
            ));
        }
        if self.kind == AnnealKind::Geometric && !(initial > 0.0 && self.final_value > 0.0) {
            return Err(CoreError::param(
                "anneal",
                "geometric annealing needs positive endpoints",
            ));
        }
        Ok(())
    }

    pub fn value_at(&self, initial: f64, step: u64) -> f64 {
        let frac = (step.min(self.steps)) as f64 / self.steps as f64;
        match self.kind {
            AnnealKind::Linear => initial + (self.final_value - initial) * frac,
            AnnealKind::Geometric => initial * (self.final_value / initial).powf(frac),
        }
    }
}

/// The strategy actually used at `step`: the base strategy with its
/// sharpness parameter annealed.
pub fn strategy_at(
    base: &SmoothingStrategy,
    anneal: Option<&SmoothingAnneal>,
    step: u64,
) -> SmoothingStrategy {
    let Some(anneal) = anneal else {
        return base.clone();
    };
    match base {
        SmoothingStrategy::Softmax { temperature } => SmoothingStrategy::Softmax {
            temperature: anneal.value_at(*temperature, step),
        },
        SmoothingStrategy::ClippedMax { tau } => SmoothingStrategy::ClippedMax {
            tau: anneal.value_at(*tau, step),
        },
        SmoothingStrategy::ClippedSoftmax { top_k, temperature } => {
            SmoothingStrategy::ClippedSoftmax {
                top_k: *top_k,
                temperature: anneal.value_at(*temperature, step),
            }
        }
        SmoothingStrategy::BayesianSoftmax {
            prior_mean,
            prior_var,
            obs_var,
            temperature,
        } => SmoothingStrategy::BayesianSoftmax {
            prior_mean: *prior_mean,
            prior_var: *prior_var,
            obs_var: *obs_var,
            temperature: anneal.value_at(*temperature, step),
        },
    }
}
