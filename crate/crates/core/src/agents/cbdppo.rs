//! CBDPPO: clipped-surrogate policy optimization where the optimized and
//! sampled policy is the belief-fused blend `b = (1 - beta) * pi + beta * p`.
//!
//! The surrogate ratio divides the current blend's probability of the taken
//! action by the behavior blend's probability recorded at collection time,
//! so at unchanged weights the ratio is exactly 1. Gradients flow through
//! the policy head only — the category prior enters the blend as a constant
//! — which shows up below as the `(1 - beta)` factor on every policy
//! gradient term.
//!
//! Losses and gradients are plain functions of the weight vector so they
//! can be checked against central differences.

use super::policy::{logits_of, stable_softmax, FeatureExtractor, LinearSoftmaxPolicy, LinearValue};
use super::{AgentState, SelectInfo};
use crate::belief::BetaSchedule;
use crate::ccf::{BeliefMode, CategoryBelief, Partition, PartitionConfig};
use crate::envs::DiscreteObs;
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, RngSnapshot, STREAM_EXPLORATION};
use crate::smoothing::ActionDistribution;
use rand_chacha::ChaCha12Rng;

/// How a collected step ended, as seen by advantage estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEnd {
    Continue,
    /// Terminal state: no bootstrap, credit chain breaks.
    Terminated,
    /// Step cap: bootstrap from the next value, but the chain still breaks.
    Truncated,
}

/// Generalized advantage estimation over one collected segment.
///
/// `next_values[t]` is the value estimate of the state following step `t`;
/// it is used whenever the step did not terminate. The recursion is
/// `A_t = delta_t + gamma * lam * A_{t+1}` within an episode and restarts
/// at every episode end.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[StepEnd],
    gamma: f64,
    lam: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || ends.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "advantage inputs",
            left: n,
            right: values.len().min(next_values.len()).min(ends.len()),
        });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CoreError::param(
            "gamma",
            format!("must lie strictly inside (0, 1), got {gamma}"),
        ));
    }
    if !(0.0..=1.0).contains(&lam) {
        return Err(CoreError::param(
            "lam",
            format!("must lie in [0, 1], got {lam}"),
        ));
    }
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let bootstrap = match ends[t] {
            StepEnd::Terminated => 0.0,
            _ => next_values[t],
        };
        let delta = rewards[t] + gamma * bootstrap - values[t];
        carry = match ends[t] {
            StepEnd::Continue => delta + gamma * lam * carry,
            _ => delta,
        };
        advantages[t] = carry;
    }
    Ok(advantages)
}

/// One collected batch, with everything the update needs frozen at
/// collection time: the behavior blend's probability of the action, the
/// category prior, and the blend weight.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub phi: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub behavior_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub priors: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn validate(&self, n_actions: usize, n_features: usize) -> Result<()> {
        let n = self.phi.len();
        if n == 0 {
            return Err(CoreError::EmptyInput("policy batch"));
        }
        if [
            self.actions.len(),
            self.behavior_probs.len(),
            self.advantages.len(),
            self.value_targets.len(),
            self.priors.len(),
            self.betas.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(CoreError::DimensionMismatch {
                context: "policy batch",
                left: n,
                right: self.actions.len(),
            });
        }
        for t in 0..n {
            if self.phi[t].len() != n_features || self.priors[t].len() != n_actions {
                return Err(CoreError::DimensionMismatch {
                    context: "policy batch row",
                    left: self.phi[t].len(),
                    right: n_features,
                });
            }
            if self.actions[t] >= n_actions {
                return Err(CoreError::param(
                    "batch action",
                    format!("{} out of range", self.actions[t]),
                ));
            }
            if !(self.behavior_probs[t] > 0.0) {
                return Err(CoreError::param(
                    "behavior probability",
                    "must be positive (the action was sampled from it)",
                ));
            }
        }
        Ok(())
    }
}

/// Clipped-surrogate policy loss with an entropy bonus:
/// `mean( -min(ratio * A, clip(ratio) * A) - entropy_coef * H(pi) )`.
pub fn ppo_policy_loss(
    w: &[f64],
    batch: &PpoBatch,
    n_actions: usize,
    clip: f64,
    entropy_coef: f64,
) -> Result<f64> {
    let n_features = w.len() / n_actions;
    batch.validate(n_actions, n_features)?;
    let mut total = 0.0;
    for t in 0..batch.len() {
        let pi = stable_softmax(&logits_of(w, &batch.phi[t], n_actions));
        let beta = batch.betas[t];
        let a = batch.actions[t];
        let b_a = (1.0 - beta) * pi[a] + beta * batch.priors[t][a];
        let ratio = b_a / batch.behavior_probs[t];
        let adv = batch.advantages[t];
        let surrogate = if adv >= 0.0 {
            adv * ratio.min(1.0 + clip)
        } else {
            adv * ratio.max(1.0 - clip)
        };
        let entropy: f64 = -pi
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
        total += -surrogate - entropy_coef * entropy;
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`ppo_policy_loss`] with respect to `w`.
///
/// Per step, with `z = W phi`, `pi = softmax(z)`, `b_a = (1-beta) pi_a +
/// beta p_a`, `ratio = b_a / b_old`:
/// * `d ratio / d z_j = (1-beta) / b_old * pi_a (1[a=j] - pi_j)`
/// * the clipped min passes gradient only while the ratio is on its active
///   side of the clip boundary,
/// * `d H / d z_j = -pi_j (ln pi_j + H)`.
pub fn ppo_policy_grad(
    w: &[f64],
    batch: &PpoBatch,
    n_actions: usize,
    clip: f64,
    entropy_coef: f64,
) -> Result<Vec<f64>> {
    let n_features = w.len() / n_actions;
    batch.validate(n_actions, n_features)?;
    let mut grad = vec![0.0; w.len()];
    let scale = 1.0 / batch.len() as f64;
    for t in 0..batch.len() {
        let phi = &batch.phi[t];
        let pi = stable_softmax(&logits_of(w, phi, n_actions));
        let beta = batch.betas[t];
        let a = batch.actions[t];
        let b_a = (1.0 - beta) * pi[a] + beta * batch.priors[t][a];
        let ratio = b_a / batch.behavior_probs[t];
        let adv = batch.advantages[t];
        let surrogate_active = if adv >= 0.0 {
            ratio < 1.0 + clip
        } else {
            ratio > 1.0 - clip
        };
        let dsurr_dratio = if surrogate_active { adv } else { 0.0 };
        let entropy: f64 = -pi
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
        for j in 0..n_actions {
            let indicator = if j == a { 1.0 } else { 0.0 };
            let dratio_dz = (1.0 - beta) / batch.behavior_probs[t] * pi[a] * (indicator - pi[j]);
            let dentropy_dz = if pi[j] > 0.0 {
                -pi[j] * (pi[j].ln() + entropy)
            } else {
                0.0
            };
            let dloss_dz = -dsurr_dratio * dratio_dz - entropy_coef * dentropy_dz;
            for (f, x) in phi.iter().enumerate() {
                grad[j * n_features + f] += scale * dloss_dz * x;
            }
        }
    }
    Ok(grad)
}

/// `0.5 * mean (w . phi - target)^2`.
pub fn ppo_value_loss(w: &[f64], phi: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    if phi.len() != targets.len() || phi.is_empty() {
        return Err(CoreError::DimensionMismatch {
            context: "value batch",
            left: phi.len(),
            right: targets.len(),
        });
    }
    let mut total = 0.0;
    for (x, target) in phi.iter().zip(targets) {
        let v: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
        total += 0.5 * (v - target) * (v - target);
    }
    Ok(total / phi.len() as f64)
}

pub fn ppo_value_grad(w: &[f64], phi: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    if phi.len() != targets.len() || phi.is_empty() {
        return Err(CoreError::DimensionMismatch {
            context: "value batch",
            left: phi.len(),
            right: targets.len(),
        });
    }
    let mut grad = vec![0.0; w.len()];
    let scale = 1.0 / phi.len() as f64;
    for (x, target) in phi.iter().zip(targets) {
        let v: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += scale * (v - target) * xi;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    /// Steps collected per update batch; collection runs across episode
    /// boundaries.
    pub horizon: usize,
    pub beta: BetaSchedule,
    pub partition: PartitionConfig,
}

impl PpoConfig {
    fn validate(&self, n_actions: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::param("gamma", "must lie strictly inside (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return Err(CoreError::param("lam", "must lie in [0, 1]"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(CoreError::param("clip", "must lie strictly inside (0, 1)"));
        }
        for (name, v) in [("lr_policy", self.lr_policy), ("lr_value", self.lr_value)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::param(name, "must be positive and finite"));
            }
        }
        if self.entropy_coef < 0.0 {
            return Err(CoreError::param("entropy_coef", "must be non-negative"));
        }
        if self.epochs == 0 || self.horizon == 0 {
            return Err(CoreError::param(
                "epochs/horizon",
                "must both be positive",
            ));
        }
        self.beta.validate()?;
        self.partition.validate()?;
        match &self.partition.belief {
            BeliefMode::Discrete {
                n_actions: belief_actions,
                ..
            } if *belief_actions == n_actions => Ok(()),
            _ => Err(CoreError::param(
                "partition belief",
                "CBDPPO needs discrete category beliefs over the action set",
            )),
        }
    }
}

/// What [`PpoAgent::act`] hands the collection loop for one step.
#[derive(Debug, Clone)]
pub struct PpoStepInfo {
    pub select: SelectInfo,
    pub phi: Vec<f64>,
    pub behavior_prob: f64,
    pub prior: Vec<f64>,
    pub value: f64,
}

pub struct PpoAgent {
    cfg: PpoConfig,
    n_actions: usize,
    extractor: FeatureExtractor,
    policy: LinearSoftmaxPolicy,
    value: LinearValue,
    partition: Partition,
    rng: ChaCha12Rng,
    seed: u64,
    step_count: u64,
}

impl PpoAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate(n_actions)?;
        let extractor = FeatureExtractor::OneHot { n_states };
        Ok(PpoAgent {
            partition: Partition::new(cfg.partition.clone())?,
            policy: LinearSoftmaxPolicy::new(extractor.dim(), n_actions)?,
            value: LinearValue::new(extractor.dim())?,
            extractor,
            cfg,
            n_actions,
            rng: stream_rng(seed, STREAM_EXPLORATION),
            seed,
            step_count: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn partition_ref(&self) -> &Partition {
        &self.partition
    }

    pub fn partition_mut_ref(&mut self) -> &mut Partition {
        &mut self.partition
    }

    pub fn value_max_abs(&self) -> f64 {
        self.value.max_abs()
    }

    pub fn state_value(&self, obs: &DiscreteObs) -> Result<f64> {
        let phi = self.extractor.extract(obs.state_id, &obs.features)?;
        self.value.value(&phi)
    }

    /// Samples an action from the blended policy, updates the category
    /// belief with it, and returns everything the batch must freeze.
    pub fn act(&mut self, obs: &DiscreteObs) -> Result<PpoStepInfo> {
        let assignment = self.partition.observe(&obs.features)?;
        let phi = self.extractor.extract(obs.state_id, &obs.features)?;
        let pi = self.policy.probs(&phi)?;
        let prior = match self.partition.belief(assignment.id)? {
            CategoryBelief::Discrete(b) => b.distribution()?.probs().to_vec(),
            CategoryBelief::Gaussian(_) => {
                return Err(CoreError::param(
                    "partition belief",
                    "CBDPPO needs discrete category beliefs",
                ))
            }
        };
        let beta = self.cfg.beta.beta_at(self.step_count);
        let blend: Vec<f64> = pi
            .iter()
            .zip(&prior)
            .map(|(z, p)| (1.0 - beta) * z + beta * p)
            .collect();
        let dist = ActionDistribution::new(blend)?;
        let action = dist.sample(&mut self.rng);
        if let CategoryBelief::Discrete(b) = self.partition.belief_mut(assignment.id)? {
            b.observe(action)?;
        }
        let value = self.value.value(&phi)?;
        self.step_count += 1;
        Ok(PpoStepInfo {
            select: SelectInfo {
                action,
                category: Some(assignment.id),
                beta,
                epsilon: 0.0,
            },
            behavior_prob: dist.probs()[action],
            prior,
            phi,
            value,
        })
    }

    /// Full-batch gradient descent on the clipped surrogate and the value
    /// regression, `epochs` passes each. Deterministic: no minibatching.
    pub fn update_from(&mut self, batch: &PpoBatch) -> Result<()> {
        for _ in 0..self.cfg.epochs {
            let grad = ppo_policy_grad(
                &self.policy.w,
                batch,
                self.n_actions,
                self.cfg.clip,
                self.cfg.entropy_coef,
            )?;
            for (w, g) in self.policy.w.iter_mut().zip(&grad) {
                *w -= self.cfg.lr_policy * g;
            }
            let vgrad = ppo_value_grad(&self.value.w, &batch.phi, &batch.value_targets)?;
            for (w, g) in self.value.w.iter_mut().zip(&vgrad) {
                *w -= self.cfg.lr_value * g;
            }
        }
        Ok(())
    }

    pub fn agent_state(&self) -> AgentState {
        AgentState::Ppo {
            n_features: self.policy.n_features,
            n_actions: self.n_actions,
            policy_w: self.policy.w.clone(),
            value_w: self.value.w.clone(),
        }
    }

    pub fn rng_snapshots(&self) -> Vec<RngSnapshot> {
        vec![RngSnapshot::capture(STREAM_EXPLORATION, self.seed, &self.rng)]
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn gamma(&self) -> f64 {
        self.cfg.gamma
    }
}
