//! CBDSAC: soft actor-critic over linear-quadratic critics and a linear
//! Gaussian actor, with the acting distribution blended per category.
//!
//! The actor's mean and variance are fused with the category's Gaussian
//! belief before noise is applied, so the executed action is a reparametrized
//! draw from the *blend*; gradients reach the policy head through the
//! `(1 - beta)` factors of the fusion. Losses are plain functions of the
//! weights with the noise passed in explicitly, which makes them
//! finite-difference checkable.

use super::policy::{logits_of, FeatureExtractor, LinearGaussianPolicy};
use super::replay::ReplayBuffer;
use super::AgentState;
use crate::belief::{fuse_gaussian, BetaSchedule, GaussianBelief};
use crate::ccf::{BeliefMode, CategoryBelief, CategoryId, Partition, PartitionConfig};
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, RngSnapshot, STREAM_EXPLORATION};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

const LN_2PI: f64 = 1.8378770664093453;

/// Quadratic critic features `psi(phi, a) = [phi, a, a^2, phi (x) a]` with
/// the outer product laid out feature-major.
pub fn critic_features(phi: &[f64], action: &[f64]) -> Vec<f64> {
    let mut psi = Vec::with_capacity(phi.len() + 2 * action.len() + phi.len() * action.len());
    psi.extend_from_slice(phi);
    psi.extend_from_slice(action);
    psi.extend(action.iter().map(|a| a * a));
    for x in phi {
        for a in action {
            psi.push(x * a);
        }
    }
    psi
}

pub fn critic_feature_dim(n_features: usize, action_dim: usize) -> usize {
    n_features + 2 * action_dim + n_features * action_dim
}

/// `Q(phi, a) = w . psi(phi, a)`.
pub fn critic_value(w: &[f64], phi: &[f64], action: &[f64]) -> f64 {
    w.iter()
        .zip(critic_features(phi, action))
        .map(|(wi, xi)| wi * xi)
        .sum()
}

/// `dQ/da_d` for the quadratic critic: the linear action weight, the
/// squared-action weight, and the cross terms.
fn critic_dq_da(w: &[f64], phi: &[f64], action: &[f64]) -> Vec<f64> {
    let f = phi.len();
    let d = action.len();
    (0..d)
        .map(|k| {
            let mut g = w[f + k] + 2.0 * action[k] * w[f + d + k];
            for (j, x) in phi.iter().enumerate() {
                g += w[f + 2 * d + j * d + k] * x;
            }
            g
        })
        .collect()
}

/// Everything the actor loss needs per sample, with the exploration noise
/// frozen so the loss is a deterministic function of the weights.
#[derive(Debug, Clone)]
pub struct SacActorBatch {
    pub phi: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub prior_mean: Vec<Vec<f64>>,
    pub prior_var: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
}

impl SacActorBatch {
    fn validate(&self, n_features: usize, action_dim: usize) -> Result<()> {
        let n = self.phi.len();
        if n == 0 {
            return Err(CoreError::EmptyInput("actor batch"));
        }
        if [self.noise.len(), self.prior_mean.len(), self.prior_var.len(), self.betas.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(CoreError::DimensionMismatch {
                context: "actor batch",
                left: n,
                right: self.noise.len(),
            });
        }
        for t in 0..n {
            if self.phi[t].len() != n_features
                || self.noise[t].len() != action_dim
                || self.prior_mean[t].len() != action_dim
                || self.prior_var[t].len() != action_dim
            {
                return Err(CoreError::DimensionMismatch {
                    context: "actor batch row",
                    left: self.phi[t].len(),
                    right: n_features,
                });
            }
        }
        Ok(())
    }
}

struct BlendPoint {
    var_blend: Vec<f64>,
    action: Vec<f64>,
    log_density: f64,
}

/// Blend, reparametrize, and evaluate the log-density of the drawn action
/// under the blend. With `a = mu + sigma * eps` the quadratic term reduces
/// to `eps^2`, so `log b(a) = -0.5 * sum(eps^2 + ln var + ln 2pi)`.
fn blend_point(
    w_mean: &[f64],
    log_std: &[f64],
    phi: &[f64],
    noise: &[f64],
    prior_mean: &[f64],
    prior_var: &[f64],
    beta: f64,
) -> BlendPoint {
    let d = log_std.len();
    let mean_policy = logits_of(w_mean, phi, d);
    let mut mean_blend = Vec::with_capacity(d);
    let mut var_blend = Vec::with_capacity(d);
    for k in 0..d {
        let var_policy = (2.0 * log_std[k]).exp();
        mean_blend.push((1.0 - beta) * mean_policy[k] + beta * prior_mean[k]);
        var_blend.push((1.0 - beta) * var_policy + beta * prior_var[k]);
    }
    let action: Vec<f64> = (0..d)
        .map(|k| mean_blend[k] + var_blend[k].sqrt() * noise[k])
        .collect();
    let log_density: f64 = (0..d)
        .map(|k| -0.5 * (noise[k] * noise[k] + var_blend[k].ln() + LN_2PI))
        .sum();
    BlendPoint {
        var_blend,
        action,
        log_density,
    }
}

/// Actor objective: `mean( alpha * log b(a~) - min(Q1, Q2)(phi, a~) )`.
pub fn sac_actor_loss(
    w_mean: &[f64],
    log_std: &[f64],
    batch: &SacActorBatch,
    critic1: &[f64],
    critic2: &[f64],
    alpha_ent: f64,
) -> Result<f64> {
    let action_dim = log_std.len();
    let n_features = w_mean.len() / action_dim;
    batch.validate(n_features, action_dim)?;
    let mut total = 0.0;
    for t in 0..batch.phi.len() {
        let point = blend_point(
            w_mean,
            log_std,
            &batch.phi[t],
            &batch.noise[t],
            &batch.prior_mean[t],
            &batch.prior_var[t],
            batch.betas[t],
        );
        let q1 = critic_value(critic1, &batch.phi[t], &point.action);
        let q2 = critic_value(critic2, &batch.phi[t], &point.action);
        total += alpha_ent * point.log_density - q1.min(q2);
    }
    Ok(total / batch.phi.len() as f64)
}

/// Analytic gradient of [`sac_actor_loss`] with respect to the mean weights
/// and the log standard deviations.
///
/// Through the reparametrized action `a_k = mu_blend_k + sigma_blend_k *
/// eps_k`:
/// * `d a_k / d mean-weight[k, f] = (1 - beta) * phi_f`,
/// * `d sigma_blend_k / d log_std_k = (1 - beta) * exp(2 ls_k) /
///   sigma_blend_k`, so `d a_k / d ls_k = eps_k` times that,
/// * `d log b / d ls_k = -(d sigma_blend_k / d ls_k) / sigma_blend_k`
///   (the quadratic term's dependence cancels under reparametrization),
/// * the Q term differentiates through the active twin only.
pub fn sac_actor_grad(
    w_mean: &[f64],
    log_std: &[f64],
    batch: &SacActorBatch,
    critic1: &[f64],
    critic2: &[f64],
    alpha_ent: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let action_dim = log_std.len();
    let n_features = w_mean.len() / action_dim;
    batch.validate(n_features, action_dim)?;
    let mut grad_w = vec![0.0; w_mean.len()];
    let mut grad_ls = vec![0.0; action_dim];
    let scale = 1.0 / batch.phi.len() as f64;
    for t in 0..batch.phi.len() {
        let phi = &batch.phi[t];
        let beta = batch.betas[t];
        let point = blend_point(
            w_mean,
            log_std,
            phi,
            &batch.noise[t],
            &batch.prior_mean[t],
            &batch.prior_var[t],
            beta,
        );
        let q1 = critic_value(critic1, phi, &point.action);
        let q2 = critic_value(critic2, phi, &point.action);
        let active = if q1 <= q2 { critic1 } else { critic2 };
        let dq_da = critic_dq_da(active, phi, &point.action);
        for k in 0..action_dim {
            let sigma_blend = point.var_blend[k].sqrt();
            let dsigma_dls = (1.0 - beta) * (2.0 * log_std[k]).exp() / sigma_blend;
            let da_dls = batch.noise[t][k] * dsigma_dls;
            let dlogb_dls = -dsigma_dls / sigma_blend;
            grad_ls[k] += scale * (alpha_ent * dlogb_dls - dq_da[k] * da_dls);
            let da_dmu = 1.0 - beta;
            for (f, x) in phi.iter().enumerate() {
                grad_w[k * n_features + f] += scale * (-dq_da[k] * da_dmu * x);
            }
        }
    }
    Ok((grad_w, grad_ls))
}

/// `0.5 * mean (w . psi - y)^2` over precomputed critic features.
pub fn sac_critic_loss(w: &[f64], psi: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    super::cbdppo::ppo_value_loss(w, psi, targets)
}

pub fn sac_critic_grad(w: &[f64], psi: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    super::cbdppo::ppo_value_grad(w, psi, targets)
}

#[derive(Debug, Clone)]
pub struct SacConfig {
    pub gamma: f64,
    /// Target-network tracking rate: `target <- (1 - polyak) * target +
    /// polyak * online` after every update.
    pub polyak: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub alpha_ent: f64,
    /// When set, the entropy weight is tuned by a gradient-free
    /// multiplicative rule toward `target_entropy`.
    pub auto_alpha: bool,
    pub target_entropy: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps before updates begin.
    pub warmup_steps: u64,
    pub updates_per_step: usize,
    pub beta: BetaSchedule,
    pub partition: PartitionConfig,
    /// Observation variance for the per-transition belief update.
    pub obs_var: f64,
    pub initial_log_std: f64,
}

impl SacConfig {
    fn validate(&self, action_dim: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::param("gamma", "must lie strictly inside (0, 1)"));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(CoreError::param("polyak", "must lie in (0, 1]"));
        }
        for (name, v) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("alpha_ent", self.alpha_ent),
            ("obs_var", self.obs_var),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::param(name, "must be positive and finite"));
            }
        }
        if self.auto_alpha && !(self.lr_alpha > 0.0) {
            return Err(CoreError::param("lr_alpha", "must be positive"));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(CoreError::param(
                "batch_size/replay_capacity",
                "must both be positive",
            ));
        }
        self.beta.validate()?;
        self.partition.validate()?;
        match &self.partition.belief {
            BeliefMode::Gaussian {
                action_dim: belief_dim,
                ..
            } if *belief_dim == action_dim => Ok(()),
            _ => Err(CoreError::param(
                "partition belief",
                "CBDSAC needs Gaussian category beliefs over the action space",
            )),
        }
    }
}

/// One stored environment transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_features: Vec<f64>,
    pub terminated: bool,
}

/// What [`SacAgent::act`] reports for diagnostics.
#[derive(Debug, Clone)]
pub struct SacStepInfo {
    pub action: Vec<f64>,
    pub category: CategoryId,
    pub beta: f64,
}

pub struct SacAgent {
    cfg: SacConfig,
    action_dim: usize,
    action_bound: f64,
    extractor: FeatureExtractor,
    actor: LinearGaussianPolicy,
    critic1: Vec<f64>,
    critic2: Vec<f64>,
    target1: Vec<f64>,
    target2: Vec<f64>,
    alpha_ent: f64,
    partition: Partition,
    replay: ReplayBuffer<Transition>,
    rng: ChaCha12Rng,
    seed: u64,
    step_count: u64,
}

impl SacAgent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        action_bound: f64,
        cfg: SacConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate(action_dim)?;
        if !(action_bound > 0.0) || !action_bound.is_finite() {
            return Err(CoreError::param("action_bound", "must be positive and finite"));
        }
        let extractor = FeatureExtractor::RawWithBias { input_dim: obs_dim };
        let n_features = extractor.dim();
        let critic_dim = critic_feature_dim(n_features, action_dim);
        Ok(SacAgent {
            partition: Partition::new(cfg.partition.clone())?,
            replay: ReplayBuffer::new(cfg.replay_capacity)?,
            actor: LinearGaussianPolicy::new(n_features, action_dim, cfg.initial_log_std)?,
            critic1: vec![0.0; critic_dim],
            critic2: vec![0.0; critic_dim],
            target1: vec![0.0; critic_dim],
            target2: vec![0.0; critic_dim],
            alpha_ent: cfg.alpha_ent,
            cfg,
            action_dim,
            action_bound,
            extractor,
            rng: stream_rng(seed, STREAM_EXPLORATION),
            seed,
            step_count: 0,
        })
    }

    pub fn partition_ref(&self) -> &Partition {
        &self.partition
    }

    pub fn partition_mut_ref(&mut self) -> &mut Partition {
        &mut self.partition
    }

    pub fn alpha_ent(&self) -> f64 {
        self.alpha_ent
    }

    pub fn critic_max_abs(&self) -> f64 {
        self.critic1
            .iter()
            .chain(&self.critic2)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    fn standard_normal(&mut self) -> f64 {
        // Box-Muller on two uniform draws; one fresh pair per call keeps
        // the stream layout simple and reproducible.
        let u1: f64 = self.rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = self.rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn category_gaussian(&self, id: CategoryId) -> Result<GaussianBelief> {
        match self.partition.belief(id)? {
            CategoryBelief::Gaussian(b) => Ok(b.clone()),
            CategoryBelief::Discrete(_) => Err(CoreError::param(
                "partition belief",
                "CBDSAC needs Gaussian category beliefs",
            )),
        }
    }

    /// Blended reparametrized action for the current state; updates the
    /// category belief with the executed (clamped) action afterwards.
    pub fn act(&mut self, obs: &[f64]) -> Result<SacStepInfo> {
        let assignment = self.partition.observe(obs)?;
        let phi = self.extractor.extract(0, obs)?;
        let mean_policy = self.actor.mean(&phi)?;
        let var_policy = self.actor.variances();
        let belief = self.category_gaussian(assignment.id)?;
        let beta = self.cfg.beta.beta_at(self.step_count);
        let (mean_blend, var_blend) = fuse_gaussian(&mean_policy, &var_policy, &belief, beta)?;
        let action: Vec<f64> = (0..self.action_dim)
            .map(|k| {
                let eps = self.standard_normal();
                (mean_blend[k] + var_blend[k].sqrt() * eps)
                    .clamp(-self.action_bound, self.action_bound)
            })
            .collect();
        // Per-transition belief update: the executed action is the
        // observation, with the configured observation variance.
        let posterior = belief.posterior(&action, self.cfg.obs_var)?;
        if let CategoryBelief::Gaussian(b) = self.partition.belief_mut(assignment.id)? {
            *b = posterior;
        }
        self.step_count += 1;
        Ok(SacStepInfo {
            action,
            category: assignment.id,
            beta,
        })
    }

    /// Stores the transition and runs the configured number of updates once
    /// warmup and batch-size conditions are met.
    pub fn observe_transition(&mut self, transition: Transition) -> Result<()> {
        self.replay.push(transition);
        if self.step_count < self.cfg.warmup_steps || self.replay.len() < self.cfg.batch_size {
            return Ok(());
        }
        for _ in 0..self.cfg.updates_per_step {
            self.update_once()?;
        }
        Ok(())
    }

    fn update_once(&mut self) -> Result<()> {
        let indices = self.replay.sample_indices(&mut self.rng, self.cfg.batch_size)?;
        let beta = self.cfg.beta.beta_at(self.step_count);

        // Critic regression toward the soft target.
        let mut psi1 = Vec::with_capacity(indices.len());
        let mut targets = Vec::with_capacity(indices.len());
        let mut next_noise: Vec<Vec<f64>> = Vec::with_capacity(indices.len());
        for _ in &indices {
            next_noise.push((0..self.action_dim).map(|_| self.standard_normal()).collect());
        }
        let mut entropy_draws = Vec::with_capacity(indices.len());
        for (&i, noise) in indices.iter().zip(&next_noise) {
            let tr = self.replay.get(i).clone();
            let phi_next = self.extractor.extract(0, &tr.next_features)?;
            let (prior_mean, prior_var, beta_used) =
                match self.partition.nearest(&tr.next_features) {
                    Some((id, _)) => {
                        let b = self.category_gaussian(id)?;
                        (b.mean().to_vec(), b.var().to_vec(), beta)
                    }
                    None => (vec![0.0; self.action_dim], vec![1.0; self.action_dim], 0.0),
                };
            let point = blend_point(
                &self.actor.w_mean,
                &self.actor.log_std,
                &phi_next,
                noise,
                &prior_mean,
                &prior_var,
                beta_used,
            );
            let q1 = critic_value(&self.target1, &phi_next, &point.action);
            let q2 = critic_value(&self.target2, &phi_next, &point.action);
            let not_terminal = if tr.terminated { 0.0 } else { 1.0 };
            let y = tr.reward
                + self.cfg.gamma
                    * not_terminal
                    * (q1.min(q2) - self.alpha_ent * point.log_density);
            let phi = self.extractor.extract(0, &tr.features)?;
            psi1.push(critic_features(&phi, &tr.action));
            targets.push(y);
            entropy_draws.push(point.log_density);
        }
        let g1 = sac_critic_grad(&self.critic1, &psi1, &targets)?;
        for (w, g) in self.critic1.iter_mut().zip(&g1) {
            *w -= self.cfg.lr_critic * g;
        }
        let g2 = sac_critic_grad(&self.critic2, &psi1, &targets)?;
        for (w, g) in self.critic2.iter_mut().zip(&g2) {
            *w -= self.cfg.lr_critic * g;
        }

        // Actor step on the same sampled states with fresh noise.
        let mut batch = SacActorBatch {
            phi: Vec::with_capacity(indices.len()),
            noise: Vec::with_capacity(indices.len()),
            prior_mean: Vec::with_capacity(indices.len()),
            prior_var: Vec::with_capacity(indices.len()),
            betas: Vec::with_capacity(indices.len()),
        };
        for &i in &indices {
            let tr = self.replay.get(i).clone();
            let (prior_mean, prior_var, beta_used) = match self.partition.nearest(&tr.features) {
                Some((id, _)) => {
                    let b = self.category_gaussian(id)?;
                    (b.mean().to_vec(), b.var().to_vec(), beta)
                }
                None => (vec![0.0; self.action_dim], vec![1.0; self.action_dim], 0.0),
            };
            batch.phi.push(self.extractor.extract(0, &tr.features)?);
            batch
                .noise
                .push((0..self.action_dim).map(|_| self.standard_normal()).collect());
            batch.prior_mean.push(prior_mean);
            batch.prior_var.push(prior_var);
            batch.betas.push(beta_used);
        }
        let (grad_w, grad_ls) = sac_actor_grad(
            &self.actor.w_mean,
            &self.actor.log_std,
            &batch,
            &self.critic1,
            &self.critic2,
            self.alpha_ent,
        )?;
        for (w, g) in self.actor.w_mean.iter_mut().zip(&grad_w) {
            *w -= self.cfg.lr_actor * g;
        }
        for (w, g) in self.actor.log_std.iter_mut().zip(&grad_ls) {
            *w -= self.cfg.lr_actor * g;
        }

        // Gradient-free entropy-weight tuning: push alpha down when the
        // policy is more entropic than the target and up when less.
        if self.cfg.auto_alpha {
            let measured_entropy =
                -entropy_draws.iter().sum::<f64>() / entropy_draws.len() as f64;
            let err = measured_entropy - self.cfg.target_entropy;
            self.alpha_ent =
                (self.alpha_ent * (-self.cfg.lr_alpha * err).exp()).clamp(1e-4, 10.0);
        }

        // Polyak tracking.
        for (t, w) in self.target1.iter_mut().zip(&self.critic1) {
            *t = (1.0 - self.cfg.polyak) * *t + self.cfg.polyak * w;
        }
        for (t, w) in self.target2.iter_mut().zip(&self.critic2) {
            *t = (1.0 - self.cfg.polyak) * *t + self.cfg.polyak * w;
        }
        Ok(())
    }

    pub fn agent_state(&self) -> AgentState {
        AgentState::Sac {
            n_features: self.actor.n_features,
            action_dim: self.action_dim,
            actor_w: self.actor.w_mean.clone(),
            log_std: self.actor.log_std.clone(),
            critic1: self.critic1.clone(),
            critic2: self.critic2.clone(),
            target1: self.target1.clone(),
            target2: self.target2.clone(),
            alpha_ent: self.alpha_ent,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::central_difference;
    use crate::ccf::{DistanceId, FeatureMapId};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn gaussian_partition(action_dim: usize) -> PartitionConfig {
        PartitionConfig {
            epsilon: 0.4,
            delta: f64::INFINITY,
            max_categories: 32,
            feature_map: FeatureMapId::Identity,
            distance: DistanceId::Euclidean,
            belief: BeliefMode::Gaussian {
                action_dim,
                prior_mean: 0.0,
                prior_var: 1.0,
                var_floor: 1e-6,
            },
            track_diagnostics: false,
        }
    }

    fn config() -> SacConfig {
        SacConfig {
            gamma: 0.99,
            polyak: 0.05,
            lr_actor: 3e-3,
            lr_critic: 1e-2,
            alpha_ent: 0.2,
            auto_alpha: false,
            target_entropy: -1.0,
            lr_alpha: 1e-3,
            batch_size: 32,
            replay_capacity: 4096,
            warmup_steps: 64,
            updates_per_step: 1,
            beta: BetaSchedule::Constant(0.3),
            partition: gaussian_partition(1),
            obs_var: 0.25,
            initial_log_std: -0.5,
        }
    }

    #[test]
    fn critic_features_have_the_documented_layout() {
        let psi = critic_features(&[2.0, 3.0], &[0.5]);
        assert_eq!(psi, vec![2.0, 3.0, 0.5, 0.25, 1.0, 1.5]);
        assert_eq!(critic_feature_dim(2, 1), 6);
    }

    #[test]
    fn critic_action_derivative_matches_central_differences() {
        let mut rng = stream_rng(3, "critic-fd");
        let phi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let action: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w: Vec<f64> = (0..critic_feature_dim(3, 2))
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let analytic = critic_dq_da(&w, &phi, &action);
        let numeric = central_difference(
            |a| critic_value(&w, &phi, a),
            &action,
            1e-6,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6, "analytic {a}, numeric {n}");
        }
    }

    fn random_actor_setup(
        seed: u64,
        n: usize,
        n_features: usize,
        action_dim: usize,
    ) -> (Vec<f64>, Vec<f64>, SacActorBatch, Vec<f64>, Vec<f64>) {
        let mut rng = stream_rng(seed, "sac-fd");
        let w_mean: Vec<f64> = (0..n_features * action_dim)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let log_std: Vec<f64> = (0..action_dim).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let critic_dim = critic_feature_dim(n_features, action_dim);
        let critic1: Vec<f64> = (0..critic_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let critic2: Vec<f64> = (0..critic_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut batch = SacActorBatch {
            phi: Vec::new(),
            noise: Vec::new(),
            prior_mean: Vec::new(),
            prior_var: Vec::new(),
            betas: Vec::new(),
        };
        for _ in 0..n {
            batch
                .phi
                .push((0..n_features).map(|_| rng.gen_range(-1.0..1.0)).collect());
            batch
                .noise
                .push((0..action_dim).map(|_| rng.gen_range(-1.5..1.5)).collect());
            batch
                .prior_mean
                .push((0..action_dim).map(|_| rng.gen_range(-0.5..0.5)).collect());
            batch
                .prior_var
                .push((0..action_dim).map(|_| rng.gen_range(0.1..1.0)).collect());
            batch.betas.push(rng.gen_range(0.0..0.8));
        }
        (w_mean, log_std, batch, critic1, critic2)
    }

    #[test]
    fn actor_mean_gradient_matches_central_differences() {
        let (w_mean, log_std, batch, c1, c2) = random_actor_setup(21, 24, 3, 2);
        let (analytic, _) =
            sac_actor_grad(&w_mean, &log_std, &batch, &c1, &c2, 0.2).unwrap();
        let numeric = central_difference(
            |w| sac_actor_loss(w, &log_std, &batch, &c1, &c2, 0.2).unwrap(),
            &w_mean,
            1e-5,
        );
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel < 1e-4, "weight {i}: analytic {a}, numeric {n}");
        }
    }

    #[test]
    fn actor_log_std_gradient_matches_central_differences() {
        let (w_mean, log_std, batch, c1, c2) = random_actor_setup(22, 24, 3, 2);
        let (_, analytic) =
            sac_actor_grad(&w_mean, &log_std, &batch, &c1, &c2, 0.2).unwrap();
        let numeric = central_difference(
            |ls| sac_actor_loss(&w_mean, ls, &batch, &c1, &c2, 0.2).unwrap(),
            &log_std,
            1e-5,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel < 1e-4, "analytic {a}, numeric {n}");
        }
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let point = blend_point(
            &[0.7, -0.2],
            &[-0.5],
            &[1.0, 0.5],
            &[0.0],
            &[2.0],
            &[0.3],
            0.0,
        );
        // beta = 0 and zero noise: the action IS the policy mean,
        // 0.7 * 1.0 - 0.2 * 0.5 = 0.6, and the variance is e^(2 log_std).
        assert_eq!(point.action, vec![0.6]);
        assert_eq!(point.var_blend, vec![(-1.0f64).exp()]);

        let point = blend_point(&[0.7, -0.2], &[-0.5], &[1.0, 0.5], &[0.0], &[2.0], &[0.3], 1.0);
        // beta = 1 and zero noise: the prior takes over completely.
        assert_eq!(point.action, vec![2.0]);
        assert_eq!(point.var_blend, vec![0.3]);
    }

    #[test]
    fn acting_updates_the_category_belief_toward_the_action() {
        let mut agent = SacAgent::new(2, 1, 1.0, config(), 17).unwrap();
        let obs = vec![0.2, -0.1];
        let info = agent.act(&obs).unwrap();
        let belief = agent.category_gaussian(info.category).unwrap();
        assert_eq!(belief.obs_count(), 1);
        assert!(belief.var()[0] < 1.0, "posterior variance shrank");
        // Posterior mean lies between prior (0) and the executed action.
        let a = info.action[0];
        if a > 0.0 {
            assert!(belief.mean()[0] > 0.0 && belief.mean()[0] < a);
        } else {
            assert!(belief.mean()[0] < 0.0 && belief.mean()[0] > a);
        }
    }

    #[test]
    fn updates_run_and_move_the_targets() {
        let mut agent = SacAgent::new(2, 1, 1.0, config(), 23).unwrap();
        let mut rng = stream_rng(4, "sac-env");
        for _ in 0..200 {
            let obs = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let info = agent.act(&obs).unwrap();
            let next = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            agent
                .observe_transition(Transition {
                    features: obs,
                    action: info.action,
                    reward: rng.gen_range(-1.0..0.0),
                    next_features: next,
                    terminated: false,
                })
                .unwrap();
        }
        assert!(agent.critic_max_abs() > 0.0, "critics learned something");
        assert!(
            agent.target1.iter().any(|v| *v != 0.0),
            "targets track the online critics"
        );
    }

    #[test]
    fn config_validation_rejects_mismatches() {
        let mut cfg = config();
        cfg.partition = gaussian_partition(2); // agent will be built with dim 1
        assert!(SacAgent::new(2, 1, 1.0, cfg, 1).is_err());
        let mut cfg = config();
        cfg.polyak = 0.0;
        assert!(SacAgent::new(2, 1, 1.0, cfg, 1).is_err());
        let cfg = config();
        assert!(SacAgent::new(2, 1, 0.0, cfg, 1).is_err(), "zero action bound");
    }
}
