//! Training loops, per-episode records, checkpoints, and the convergence
//! probe used by post-hoc verification.

use super::cbdppo::{gae, PpoAgent, PpoBatch, StepEnd};
use super::cbdsac::{SacAgent, Transition};
use super::{AgentState, DiscreteController};
use crate::ccf::{AuditReport, CategoryId, PartitionSnapshot};
use crate::envs::{ContinuousActionEnv, DiscreteActionEnv};
use crate::error::{CoreError, Result};
use crate::rng::RngSnapshot;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::Instant;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One completed (or final partial) episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub episode: u64,
    /// Cumulative environment steps when the episode ended.
    pub env_steps: u64,
    /// Undiscounted episode return.
    pub ret: f64,
    /// Steps in this episode.
    pub steps: u64,
    pub beta: f64,
    pub epsilon: f64,
    pub categories: u64,
    pub overflow: u64,
    pub q_abs_max: f64,
    /// Wall-clock seconds spent in the episode. The only field that varies
    /// between identical runs.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: u64,
    pub episode: u64,
    pub agent: AgentState,
    pub partition: Option<PartitionSnapshot>,
    pub rng: Vec<RngSnapshot>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub records: Vec<RunRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub audits: Vec<AuditReport>,
    pub evals: Vec<EvalRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub total_steps: u64,
    pub checkpoint_every: Option<u64>,
    pub audit_every: Option<u64>,
    /// Recent (features, category) pairs retained for audits.
    pub audit_window: usize,
    pub audit_reassign: bool,
    /// Cadence of greedy evaluation probes (needs an eval environment).
    pub eval_every: Option<u64>,
    /// Greedy episodes per probe.
    pub eval_episodes: u32,
}

impl TrainParams {
    pub fn new(total_steps: u64) -> Self {
        TrainParams {
            total_steps,
            checkpoint_every: None,
            audit_every: None,
            audit_window: 512,
            audit_reassign: false,
            eval_every: None,
            eval_episodes: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(CoreError::param("total_steps", "must be positive"));
        }
        for (name, v) in [
            ("checkpoint_every", self.checkpoint_every),
            ("audit_every", self.audit_every),
            ("eval_every", self.eval_every),
        ] {
            if v == Some(0) {
                return Err(CoreError::param(name, "must be positive when set"));
            }
        }
        if self.eval_every.is_some() && self.eval_episodes == 0 {
            return Err(CoreError::param(
                "eval_episodes",
                "must be positive when eval_every is set",
            ));
        }
        Ok(())
    }
}

/// One greedy evaluation probe: mean undiscounted return of
/// `episodes` rollouts of the controller's exploit policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub episodes: u32,
    pub mean_return: f64,
}

struct EpisodeTracker {
    episode: u64,
    env_steps: u64,
    ret: f64,
    steps: u64,
    timer: Instant,
}

impl EpisodeTracker {
    fn new() -> Self {
        EpisodeTracker {
            episode: 0,
            env_steps: 0,
            ret: 0.0,
            steps: 0,
            timer: Instant::now(),
        }
    }

    fn absorb(&mut self, reward: f64) {
        self.ret += reward;
        self.steps += 1;
        self.env_steps += 1;
    }

    fn record(
        &mut self,
        beta: f64,
        epsilon: f64,
        categories: u64,
        overflow: u64,
        q_abs_max: f64,
    ) -> RunRecord {
        let record = RunRecord {
            episode: self.episode,
            env_steps: self.env_steps,
            ret: self.ret,
            steps: self.steps,
            beta,
            epsilon,
            categories,
            overflow,
            q_abs_max,
            wall_time_s: self.timer.elapsed().as_secs_f64(),
        };
        self.episode += 1;
        self.ret = 0.0;
        self.steps = 0;
        self.timer = Instant::now();
        record
    }
}

fn discrete_checkpoint<C: DiscreteController + ?Sized>(
    controller: &C,
    env: &dyn DiscreteActionEnv,
    step: u64,
    episode: u64,
) -> Checkpoint {
    let mut rng = vec![env.rng_snapshot()];
    rng.extend(controller.rng_snapshots());
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        step,
        episode,
        agent: controller.agent_state(),
        partition: controller.partition().map(|p| p.snapshot()),
        rng,
    }
}

/// Runs a tabular controller for `total_steps` environment steps.
pub fn train_discrete<C: DiscreteController + ?Sized>(
    env: &mut dyn DiscreteActionEnv,
    controller: &mut C,
    params: &TrainParams,
) -> Result<TrainOutput> {
    train_discrete_with_eval(env, None, controller, params)
}

/// [`train_discrete`] plus periodic greedy probes on a separate environment
/// instance, so evaluation never disturbs the training streams.
pub fn train_discrete_with_eval<'e, C: DiscreteController + ?Sized>(
    env: &mut dyn DiscreteActionEnv,
    mut eval_env: Option<&mut (dyn DiscreteActionEnv + 'e)>,
    controller: &mut C,
    params: &TrainParams,
) -> Result<TrainOutput> {
    params.validate()?;
    if params.eval_every.is_some() && eval_env.is_none() {
        return Err(CoreError::param(
            "eval_every",
            "needs an evaluation environment",
        ));
    }
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut audits = Vec::new();
    let mut evals = Vec::new();
    let mut audit_buffer: VecDeque<(Vec<f64>, CategoryId)> = VecDeque::new();

    let mut tracker = EpisodeTracker::new();
    let mut obs = env.reset();
    controller.begin_episode();
    for step in 1..=params.total_steps {
        let info = controller.select(&obs)?;
        if let Some(category) = info.category {
            if audit_buffer.len() == params.audit_window {
                audit_buffer.pop_front();
            }
            audit_buffer.push_back((obs.features.clone(), category));
        }
        let outcome = env.step(info.action)?;
        let next = if outcome.terminated {
            None
        } else {
            Some(&outcome.obs)
        };
        controller.update(&obs, &info, outcome.reward, next)?;
        tracker.absorb(outcome.reward);

        if outcome.done() {
            let (categories, overflow) = controller
                .partition()
                .map_or((0, 0), |p| (p.len() as u64, p.overflow_count()));
            records.push(tracker.record(
                info.beta,
                info.epsilon,
                categories,
                overflow,
                controller.q_abs_max(),
            ));
            obs = env.reset();
            controller.begin_episode();
        } else {
            obs = outcome.obs;
        }

        if params.audit_every.is_some_and(|k| step % k == 0) {
            if let Some(partition) = controller.partition_mut() {
                let sample: Vec<(Vec<f64>, CategoryId)> =
                    audit_buffer.iter().cloned().collect();
                audits.push(partition.coherence_audit(&sample, params.audit_reassign)?);
            }
        }
        if params.checkpoint_every.is_some_and(|k| step % k == 0) {
            checkpoints.push(discrete_checkpoint(controller, env, step, tracker.episode));
        }
        if params.eval_every.is_some_and(|k| step % k == 0) {
            let probe_env = eval_env.as_deref_mut().expect("checked above");
            evals.push(greedy_probe(probe_env, controller, step, params.eval_episodes)?);
        }
    }
    if tracker.steps > 0 {
        let (categories, overflow) = controller
            .partition()
            .map_or((0, 0), |p| (p.len() as u64, p.overflow_count()));
        let beta_epsilon = records
            .last()
            .map(|r| (r.beta, r.epsilon))
            .unwrap_or((0.0, 0.0));
        records.push(tracker.record(
            beta_epsilon.0,
            beta_epsilon.1,
            categories,
            overflow,
            controller.q_abs_max(),
        ));
    }
    let already_final = params
        .checkpoint_every
        .is_some_and(|k| params.total_steps % k == 0);
    if !already_final || checkpoints.is_empty() {
        checkpoints.push(discrete_checkpoint(
            controller,
            env,
            params.total_steps,
            tracker.episode,
        ));
    }
    Ok(TrainOutput {
        records,
        checkpoints,
        audits,
        evals,
    })
}

fn greedy_probe<C: DiscreteController + ?Sized>(
    env: &mut dyn DiscreteActionEnv,
    controller: &C,
    step: u64,
    episodes: u32,
) -> Result<EvalRecord> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset();
        loop {
            let action = controller.greedy_action(&obs)?;
            let outcome = env.step(action)?;
            total += outcome.reward;
            if outcome.done() {
                break;
            }
            obs = outcome.obs;
        }
    }
    Ok(EvalRecord {
        step,
        episodes,
        mean_return: total / episodes as f64,
    })
}

/// On-policy training: collect `horizon`-step segments with the blended
/// policy, estimate advantages, update, repeat.
pub fn train_ppo(
    env: &mut dyn DiscreteActionEnv,
    agent: &mut PpoAgent,
    params: &TrainParams,
) -> Result<TrainOutput> {
    params.validate()?;
    let horizon = agent.config().horizon;
    let gamma = agent.gamma();
    let lam = agent.config().lam;

    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut audits = Vec::new();
    let mut audit_buffer: VecDeque<(Vec<f64>, CategoryId)> = VecDeque::new();

    let mut tracker = EpisodeTracker::new();
    let mut obs = env.reset();
    let mut step: u64 = 0;
    'outer: loop {
        // Collect one segment.
        let mut phi = Vec::with_capacity(horizon);
        let mut actions = Vec::with_capacity(horizon);
        let mut behavior_probs = Vec::with_capacity(horizon);
        let mut priors = Vec::with_capacity(horizon);
        let mut betas = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        let mut values = Vec::with_capacity(horizon);
        let mut next_values = Vec::with_capacity(horizon);
        let mut ends = Vec::with_capacity(horizon);

        for _ in 0..horizon {
            let info = agent.act(&obs)?;
            if let Some(category) = info.select.category {
                if audit_buffer.len() == params.audit_window {
                    audit_buffer.pop_front();
                }
                audit_buffer.push_back((obs.features.clone(), category));
            }
            let outcome = env.step(info.select.action)?;
            tracker.absorb(outcome.reward);
            step += 1;

            phi.push(info.phi);
            actions.push(info.select.action);
            behavior_probs.push(info.behavior_prob);
            priors.push(info.prior);
            betas.push(info.select.beta);
            rewards.push(outcome.reward);
            values.push(info.value);
            ends.push(if outcome.terminated {
                StepEnd::Terminated
            } else if outcome.truncated {
                StepEnd::Truncated
            } else {
                StepEnd::Continue
            });
            next_values.push(agent.state_value(&outcome.obs)?);

            if outcome.done() {
                let partition = agent.partition_ref();
                let (categories, overflow) = (partition.len() as u64, partition.overflow_count());
                records.push(tracker.record(
                    info.select.beta,
                    0.0,
                    categories,
                    overflow,
                    agent.value_max_abs(),
                ));
                obs = env.reset();
            } else {
                obs = outcome.obs;
            }

            if params.audit_every.is_some_and(|k| step % k == 0) {
                let sample: Vec<(Vec<f64>, CategoryId)> =
                    audit_buffer.iter().cloned().collect();
                audits.push(
                    agent
                        .partition_mut_ref()
                        .coherence_audit(&sample, params.audit_reassign)?,
                );
            }
            if params.checkpoint_every.is_some_and(|k| step % k == 0) {
                checkpoints.push(ppo_checkpoint(agent, env, step, tracker.episode));
            }
            if step >= params.total_steps {
                let advantages = gae(&rewards, &values, &next_values, &ends, gamma, lam)?;
                let value_targets: Vec<f64> =
                    advantages.iter().zip(&values).map(|(a, v)| a + v).collect();
                agent.update_from(&PpoBatch {
                    phi,
                    actions,
                    behavior_probs,
                    advantages,
                    value_targets,
                    priors,
                    betas,
                })?;
                break 'outer;
            }
        }

        let advantages = gae(&rewards, &values, &next_values, &ends, gamma, lam)?;
        let value_targets: Vec<f64> =
            advantages.iter().zip(&values).map(|(a, v)| a + v).collect();
        agent.update_from(&PpoBatch {
            phi,
            actions,
            behavior_probs,
            advantages,
            value_targets,
            priors,
            betas,
        })?;
    }
    if tracker.steps > 0 {
        let partition = agent.partition_ref();
        let (categories, overflow) = (partition.len() as u64, partition.overflow_count());
        let beta = records.last().map(|r| r.beta).unwrap_or(0.0);
        records.push(tracker.record(beta, 0.0, categories, overflow, agent.value_max_abs()));
    }
    checkpoints.push(ppo_checkpoint(
        agent,
        env,
        params.total_steps,
        tracker.episode,
    ));
    Ok(TrainOutput {
        records,
        checkpoints,
        audits,
        evals: Vec::new(),
    })
}

fn ppo_checkpoint(
    agent: &PpoAgent,
    env: &dyn DiscreteActionEnv,
    step: u64,
    episode: u64,
) -> Checkpoint {
    let mut rng = vec![env.rng_snapshot()];
    rng.extend(agent.rng_snapshots());
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        step,
        episode,
        agent: agent.agent_state(),
        partition: Some(agent.partition_ref().snapshot()),
        rng,
    }
}

/// Off-policy training on a continuous-action environment.
pub fn train_sac(
    env: &mut dyn ContinuousActionEnv,
    agent: &mut SacAgent,
    params: &TrainParams,
) -> Result<TrainOutput> {
    params.validate()?;
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut audits = Vec::new();
    let mut audit_buffer: VecDeque<(Vec<f64>, CategoryId)> = VecDeque::new();

    let mut tracker = EpisodeTracker::new();
    let mut obs = env.reset();
    for step in 1..=params.total_steps {
        let info = agent.act(&obs)?;
        if audit_buffer.len() == params.audit_window {
            audit_buffer.pop_front();
        }
        audit_buffer.push_back((obs.clone(), info.category));
        let outcome = env.step(&info.action)?;
        agent.observe_transition(Transition {
            features: obs.clone(),
            action: info.action.clone(),
            reward: outcome.reward,
            next_features: outcome.obs.clone(),
            terminated: outcome.terminated,
        })?;
        tracker.absorb(outcome.reward);

        if outcome.done() {
            let partition = agent.partition_ref();
            let (categories, overflow) = (partition.len() as u64, partition.overflow_count());
            records.push(tracker.record(
                info.beta,
                0.0,
                categories,
                overflow,
                agent.critic_max_abs(),
            ));
            obs = env.reset();
        } else {
            obs = outcome.obs;
        }

        if params.audit_every.is_some_and(|k| step % k == 0) {
            let sample: Vec<(Vec<f64>, CategoryId)> = audit_buffer.iter().cloned().collect();
            // Partition access needs the agent; audits reuse its handle.
            audits.push(agent_partition_audit(agent, &sample, params.audit_reassign)?);
        }
        if params.checkpoint_every.is_some_and(|k| step % k == 0) {
            checkpoints.push(sac_checkpoint(agent, env, step, tracker.episode));
        }
    }
    if tracker.steps > 0 {
        let partition = agent.partition_ref();
        let (categories, overflow) = (partition.len() as u64, partition.overflow_count());
        let beta = records.last().map(|r| r.beta).unwrap_or(0.0);
        records.push(tracker.record(beta, 0.0, categories, overflow, agent.critic_max_abs()));
    }
    checkpoints.push(sac_checkpoint(
        agent,
        env,
        params.total_steps,
        tracker.episode,
    ));
    Ok(TrainOutput {
        records,
        checkpoints,
        audits,
        evals: Vec::new(),
    })
}

fn agent_partition_audit(
    agent: &mut SacAgent,
    sample: &[(Vec<f64>, CategoryId)],
    reassign: bool,
) -> Result<AuditReport> {
    agent.partition_mut_ref().coherence_audit(sample, reassign)
}

fn sac_checkpoint(
    agent: &SacAgent,
    env: &dyn ContinuousActionEnv,
    step: u64,
    episode: u64,
) -> Checkpoint {
    let mut rng = vec![env.rng_snapshot()];
    rng.extend(agent.rng_snapshots());
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        step,
        episode,
        agent: agent.agent_state(),
        partition: Some(agent.partition_ref().snapshot()),
        rng,
    }
}

/// Sup-norm distance of each checkpoint's Q table from a reference table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSeries {
    pub steps: Vec<u64>,
    pub sup_deltas: Vec<f64>,
}

pub fn convergence_probe(checkpoints: &[Checkpoint], q_star: &[f64]) -> Result<DeltaSeries> {
    if checkpoints.is_empty() {
        return Err(CoreError::EmptyInput("checkpoints"));
    }
    let mut steps = Vec::with_capacity(checkpoints.len());
    let mut sup_deltas = Vec::with_capacity(checkpoints.len());
    for ckpt in checkpoints {
        let AgentState::Q { q, .. } = &ckpt.agent else {
            return Err(CoreError::CheckpointContents(
                "convergence probe needs a tabular value agent",
            ));
        };
        if q.len() != q_star.len() {
            return Err(CoreError::DimensionMismatch {
                context: "convergence probe",
                left: q.len(),
                right: q_star.len(),
            });
        }
        let sup = q
            .iter()
            .zip(q_star)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        steps.push(ckpt.step);
        sup_deltas.push(sup);
    }
    Ok(DeltaSeries { steps, sup_deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::cbdq::{CbdqAgent, CbdqConfig};
    use crate::agents::cbdppo::PpoConfig;
    use crate::agents::cbdsac::SacConfig;
    use crate::agents::schedules::{AlphaSchedule, EpsilonSchedule};
    use crate::belief::BetaSchedule;
    use crate::ccf::{BeliefMode, DistanceId, FeatureMapId, PartitionConfig};
    use crate::envs::{Chain, GridWorld, Reach1d};
    use crate::smoothing::SmoothingStrategy;

    fn discrete_partition(n_actions: usize, track: bool) -> PartitionConfig {
        PartitionConfig {
            epsilon: 0.25,
            delta: f64::INFINITY,
            max_categories: 64,
            feature_map: FeatureMapId::Identity,
            distance: DistanceId::Euclidean,
            belief: BeliefMode::Discrete {
                n_actions,
                laplace: 1.0,
            },
            track_diagnostics: track,
        }
    }

    fn cbdq_config(n_actions: usize) -> CbdqConfig {
        CbdqConfig {
            gamma: 0.95,
            alpha: AlphaSchedule::Constant(0.3),
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                decay_steps: 500,
            },
            smoothing: SmoothingStrategy::Softmax { temperature: 0.5 },
            anneal: None,
            beta: BetaSchedule::Constant(0.2),
            partition: discrete_partition(n_actions, false),
        }
    }

    #[test]
    fn discrete_training_produces_consistent_records_and_checkpoints() {
        let mut env =
            GridWorld::new(4, 4, (0, 0), (3, 3), vec![], -0.01, 1.0, -1.0, 30, 7).unwrap();
        let mut agent = CbdqAgent::new(16, 4, cbdq_config(4), 7).unwrap();
        let mut params = TrainParams::new(200);
        params.checkpoint_every = Some(80);
        let out = train_discrete(&mut env, &mut agent, &params).unwrap();

        assert!(!out.records.is_empty());
        for pair in out.records.windows(2) {
            assert_eq!(pair[0].episode + 1, pair[1].episode);
            assert!(pair[0].env_steps < pair[1].env_steps);
        }
        let total_steps: u64 = out.records.iter().map(|r| r.steps).sum();
        assert_eq!(total_steps, 200, "every env step lands in some record");
        // Checkpoints at 80, 160, and the forced final at 200.
        assert_eq!(
            out.checkpoints.iter().map(|c| c.step).collect::<Vec<_>>(),
            vec![80, 160, 200]
        );
        assert_eq!(out.checkpoints[0].format_version, CHECKPOINT_FORMAT_VERSION);
        assert!(out.checkpoints[0].partition.is_some());
        assert_eq!(out.checkpoints[0].rng.len(), 2, "env + exploration streams");
    }

    #[test]
    fn eval_probes_fire_without_perturbing_training() {
        let build_env =
            || GridWorld::new(4, 4, (0, 0), (3, 3), vec![], -0.01, 1.0, -1.0, 30, 7).unwrap();
        let params = TrainParams::new(300);

        let mut plain_env = build_env();
        let mut plain_agent = CbdqAgent::new(16, 4, cbdq_config(4), 7).unwrap();
        let plain = train_discrete(&mut plain_env, &mut plain_agent, &params).unwrap();

        let mut env = build_env();
        let mut eval_env = build_env();
        let mut agent = CbdqAgent::new(16, 4, cbdq_config(4), 7).unwrap();
        let mut with_eval = params.clone();
        with_eval.eval_every = Some(100);
        with_eval.eval_episodes = 2;
        let probed = train_discrete_with_eval(
            &mut env,
            Some(&mut eval_env),
            &mut agent,
            &with_eval,
        )
        .unwrap();

        assert_eq!(probed.evals.len(), 3);
        assert!(probed.evals.iter().all(|e| e.mean_return.is_finite()));
        assert_eq!(
            probed.evals.iter().map(|e| e.step).collect::<Vec<_>>(),
            vec![100, 200, 300]
        );
        // The probes are read-only: the trained tables match bit for bit.
        match (plain.checkpoints.last(), probed.checkpoints.last()) {
            (
                Some(Checkpoint {
                    agent: AgentState::Q { q: q_plain, .. },
                    ..
                }),
                Some(Checkpoint {
                    agent: AgentState::Q { q: q_probed, .. },
                    ..
                }),
            ) => assert_eq!(q_plain, q_probed),
            other => panic!("unexpected checkpoint shapes: {other:?}"),
        }

        let mut env = build_env();
        let mut agent = CbdqAgent::new(16, 4, cbdq_config(4), 7).unwrap();
        let err = train_discrete_with_eval(&mut env, None, &mut agent, &with_eval).unwrap_err();
        assert!(err.to_string().contains("eval"));
    }

    #[test]
    fn audits_fire_on_schedule() {
        let mut env =
            GridWorld::new(4, 4, (0, 0), (3, 3), vec![], -0.01, 1.0, -1.0, 30, 7).unwrap();
        let mut cfg = cbdq_config(4);
        cfg.partition = discrete_partition(4, true);
        let mut agent = CbdqAgent::new(16, 4, cfg, 7).unwrap();
        let mut params = TrainParams::new(120);
        params.audit_every = Some(40);
        let out = train_discrete(&mut env, &mut agent, &params).unwrap();
        assert_eq!(out.audits.len(), 3);
        assert!(out.audits.iter().all(|a| a.examined > 0));
    }

    #[test]
    fn convergence_probe_reports_sup_norm_per_checkpoint() {
        let ckpt = |step: u64, q: Vec<f64>| Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            step,
            episode: 0,
            agent: AgentState::Q {
                n_states: 2,
                n_actions: 1,
                q,
                visits: vec![0, 0],
            },
            partition: None,
            rng: vec![],
        };
        let series = convergence_probe(
            &[ckpt(10, vec![0.0, 0.0]), ckpt(20, vec![0.9, 2.0])],
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(series.steps, vec![10, 20]);
        assert!((series.sup_deltas[0] - 2.0).abs() < 1e-15);
        assert!((series.sup_deltas[1] - 0.1).abs() < 1e-12);

        assert!(convergence_probe(&[], &[1.0]).is_err());
        assert!(convergence_probe(&[ckpt(1, vec![0.0, 0.0])], &[1.0]).is_err());
    }

    #[test]
    fn ppo_trains_on_the_chain_without_blowing_up() {
        let mut env = Chain::new(4, 16, 3).unwrap();
        let cfg = PpoConfig {
            gamma: 0.95,
            lam: 0.95,
            clip: 0.2,
            lr_policy: 0.05,
            lr_value: 0.1,
            entropy_coef: 0.01,
            epochs: 4,
            horizon: 64,
            beta: BetaSchedule::LinearRamp {
                beta0: 0.0,
                beta_star: 0.3,
                rate: 1e-4,
            },
            partition: discrete_partition(2, false),
        };
        let mut agent = PpoAgent::new(4, 2, cfg, 3).unwrap();
        let params = TrainParams::new(1_000);
        let out = train_ppo(&mut env, &mut agent, &params).unwrap();
        assert!(out.records.len() > 10, "episodes completed");
        let total: u64 = out.records.iter().map(|r| r.steps).sum();
        assert_eq!(total, 1_000);
        match &out.checkpoints.last().unwrap().agent {
            AgentState::Ppo { policy_w, .. } => {
                assert!(policy_w.iter().any(|w| *w != 0.0), "policy moved");
            }
            other => panic!("wrong agent state: {other:?}"),
        }
        // Later episodes should reach the goal more often than the first
        // ones (return 1 instead of 0).
        let early: f64 = out.records[..5].iter().map(|r| r.ret).sum();
        let late: f64 = out.records[out.records.len() - 5..]
            .iter()
            .map(|r| r.ret)
            .sum();
        assert!(
            late >= early,
            "learning should not get worse: early {early}, late {late}"
        );
    }

    #[test]
    fn sac_trains_on_reach1d_and_checkpoints_carry_twin_critics() {
        let mut env = Reach1d::new(50, 9).unwrap();
        let cfg = SacConfig {
            gamma: 0.99,
            polyak: 0.05,
            lr_actor: 1e-3,
            lr_critic: 1e-2,
            alpha_ent: 0.1,
            auto_alpha: false,
            target_entropy: -1.0,
            lr_alpha: 1e-3,
            batch_size: 32,
            replay_capacity: 2048,
            warmup_steps: 100,
            updates_per_step: 1,
            beta: BetaSchedule::Constant(0.2),
            partition: PartitionConfig {
                epsilon: 0.4,
                delta: f64::INFINITY,
                max_categories: 32,
                feature_map: FeatureMapId::Identity,
                distance: DistanceId::Euclidean,
                belief: BeliefMode::Gaussian {
                    action_dim: 1,
                    prior_mean: 0.0,
                    prior_var: 1.0,
                    var_floor: 1e-6,
                },
                track_diagnostics: false,
            },
            obs_var: 0.25,
            initial_log_std: -0.7,
        };
        let mut agent = SacAgent::new(2, 1, 1.0, cfg, 9).unwrap();
        let params = TrainParams::new(400);
        let out = train_sac(&mut env, &mut agent, &params).unwrap();
        assert_eq!(out.records.len(), 8, "50-step episodes over 400 steps");
        match &out.checkpoints.last().unwrap().agent {
            AgentState::Sac {
                critic1, critic2, ..
            } => {
                assert!(critic1.iter().any(|w| *w != 0.0));
                assert!(critic2.iter().any(|w| *w != 0.0));
            }
            other => panic!("wrong agent state: {other:?}"),
        }
    }
}
