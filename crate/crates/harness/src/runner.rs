//! Experiment execution: one worker thread per seed, each owning its agent,
//! environment, and output files; the summarizer runs after all workers join.

use crate::config::{CcfKnobs, AgentSpec, ExperimentConfig, RawConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{
    aggregate, summarize_episodes, write_jsonl, write_summary_csv, EpisodeRow, MetricsRow,
    SeedSummary, METRICS_FORMAT_VERSION,
};
use cbdrl_core::agents::{
    train_discrete_with_eval, train_ppo, train_sac, CbdqAgent, CbdqConfig, Checkpoint, PpoAgent,
    PpoConfig, QLearningAgent, SacAgent, SacConfig, TrainOutput, TrainParams,
};
use cbdrl_core::ccf::{AuditReport, BeliefMode, PartitionConfig};
use cbdrl_core::envs::{make_env, ContinuousActionEnv, DiscreteActionEnv, EnvHandle};
use cbdrl_core::mdp::q_upper_bound;
use cbdrl_core::rng::{stream_seed, STREAM_ENV};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable naming the directory all run outputs live under.
pub const OUTPUT_ROOT_VAR: &str = "CBDRL_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// The `config.json` echo written into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub format_version: u32,
    pub name: String,
    /// The raw dotted keys exactly as configured (defaults not expanded).
    pub keys: BTreeMap<String, String>,
}

pub fn read_config_echo(dir: &Path) -> Result<ConfigEcho> {
    let path = dir.join("config.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| HarnessError::runtime(format!("opening {}: {e}", path.display())))?;
    let echo: ConfigEcho = serde_json::from_str(&text)
        .map_err(|e| HarnessError::runtime(format!("{}: {e}", path.display())))?;
    if echo.format_version != METRICS_FORMAT_VERSION {
        return Err(HarnessError::runtime(format!(
            "{}: format_version {} unsupported",
            path.display(),
            echo.format_version
        )));
    }
    Ok(echo)
}

#[derive(Debug, Clone)]
pub struct SeedReport {
    pub seed: u64,
    pub summary: SeedSummary,
    pub checkpoints: usize,
    pub evals: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedReport>,
    pub aggregate: SeedSummary,
    pub threshold: Option<f64>,
}

/// Trains every seed of `cfg` and writes the run directory under the
/// configured output root. Refuses to touch an existing directory unless
/// `force` is set.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<RunOutcome> {
    run_experiment_in(&output_root(), cfg, force)
}

pub fn run_experiment_in(root: &Path, cfg: &ExperimentConfig, force: bool) -> Result<RunOutcome> {
    let dir = root.join(&cfg.out_dir);
    claim_dir(&dir, force)?;

    let echo = ConfigEcho {
        format_version: METRICS_FORMAT_VERSION,
        name: cfg.name.clone(),
        keys: cfg.echo.clone(),
    };
    write_pretty_json(&dir.join("config.json"), &echo)?;

    let results: Vec<Result<SeedReport>> = std::thread::scope(|scope| {
        let dir = &dir;
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_seed(cfg, seed, dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(HarnessError::runtime("seed worker panicked")))
            })
            .collect()
    });
    let mut seeds = Vec::with_capacity(results.len());
    for result in results {
        seeds.push(result?);
    }

    let per_seed: Vec<SeedSummary> = seeds.iter().map(|r| r.summary.clone()).collect();
    let agg = aggregate(&per_seed);
    write_summary_csv(&dir.join("summary.csv"), &per_seed, &agg, cfg.threshold)?;

    Ok(RunOutcome {
        dir,
        seeds,
        aggregate: agg,
        threshold: cfg.threshold,
    })
}

fn claim_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !force {
            return Err(HarnessError::config(format!(
                "output directory {} already exists; pass --force to replace it",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(dir)
            .map_err(|e| HarnessError::runtime(format!("clearing {}: {e}", dir.display())))?;
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::runtime(format!("creating {}: {e}", dir.display())))?;
    Ok(())
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::runtime(format!("encoding {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
}

/// Construction problems are config errors; anything after training starts
/// is a runtime failure.
fn config_stage(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::config(e)
}

fn runtime_stage(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::runtime(e)
}

fn train_params(cfg: &ExperimentConfig) -> TrainParams {
    let cadence = |n: u64| if n == 0 { None } else { Some(n) };
    let mut params = TrainParams::new(cfg.total_steps);
    params.checkpoint_every = cadence(cfg.checkpoint_every);
    params.audit_every = cadence(cfg.audit_every);
    params.audit_reassign = cfg.audit_reassign;
    params.eval_every = cadence(cfg.eval_interval);
    params.eval_episodes = cfg.eval_episodes;
    params
}

fn partition_config(ccf: &CcfKnobs, belief: BeliefMode) -> PartitionConfig {
    PartitionConfig {
        epsilon: ccf.epsilon,
        delta: ccf.delta,
        max_categories: ccf.max_categories,
        feature_map: ccf.feature_map,
        distance: ccf.distance,
        belief,
        track_diagnostics: ccf.track_diagnostics,
    }
}

fn discrete_env(cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn DiscreteActionEnv>> {
    match make_env(&cfg.env_name, &cfg.env_params, seed).map_err(config_stage)? {
        EnvHandle::Discrete(env) => Ok(env),
        EnvHandle::Continuous(env) => Err(HarnessError::config(format!(
            "agent `{}` needs a discrete-action environment, but `{}` is continuous",
            cfg.agent.kind(),
            env.name()
        ))),
    }
}

fn continuous_env(cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn ContinuousActionEnv>> {
    match make_env(&cfg.env_name, &cfg.env_params, seed).map_err(config_stage)? {
        EnvHandle::Continuous(env) => Ok(env),
        EnvHandle::Discrete(env) => Err(HarnessError::config(format!(
            "agent `{}` needs a continuous-action environment, but `{}` is discrete",
            cfg.agent.kind(),
            env.name()
        ))),
    }
}

/// Largest |Q| any policy can justify, when the environment's reward bound
/// is known: via the exact view where one exists, by published constant for
/// the rest.
fn tabular_q_bound(env: &dyn DiscreteActionEnv, gamma: f64) -> Result<Option<f64>> {
    let r_bound = match env.tabular_view(gamma) {
        Some(view) => Some(view.map_err(runtime_stage)?.reward_bound()),
        None => match env.name() {
            "cartpole" => Some(1.0),
            _ => None,
        },
    };
    match r_bound {
        Some(r) => Ok(Some(q_upper_bound(r, gamma).map_err(runtime_stage)?)),
        None => Ok(None),
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<SeedReport> {
    let params = train_params(cfg);
    let env_seed = stream_seed(seed, STREAM_ENV);
    let (output, q_bound) = match &cfg.agent {
        AgentSpec::Cbdq(k) => {
            let mut env = discrete_env(cfg, env_seed)?;
            let n_actions = env.n_actions();
            let core_cfg = CbdqConfig {
                gamma: k.q.gamma,
                alpha: k.q.alpha,
                epsilon: k.q.epsilon,
                smoothing: k.smoothing.clone(),
                anneal: k.anneal,
                beta: k.beta.clone(),
                partition: partition_config(
                    &k.ccf,
                    BeliefMode::Discrete {
                        n_actions,
                        laplace: k.ccf.laplace,
                    },
                ),
            };
            let mut agent =
                CbdqAgent::new(env.n_states(), n_actions, core_cfg, seed).map_err(config_stage)?;
            let q_bound = tabular_q_bound(env.as_ref(), k.q.gamma)?;
            let mut eval_env = eval_env(cfg, seed)?;
            let output =
                train_discrete_with_eval(env.as_mut(), eval_env.as_deref_mut(), &mut agent, &params)
                    .map_err(runtime_stage)?;
            (output, q_bound)
        }
        AgentSpec::QLearning(k) => {
            let mut env = discrete_env(cfg, env_seed)?;
            let mut agent = QLearningAgent::new(
                env.n_states(),
                env.n_actions(),
                k.gamma,
                k.alpha,
                k.epsilon,
                seed,
            )
            .map_err(config_stage)?;
            let q_bound = tabular_q_bound(env.as_ref(), k.gamma)?;
            let mut eval_env = eval_env(cfg, seed)?;
            let output =
                train_discrete_with_eval(env.as_mut(), eval_env.as_deref_mut(), &mut agent, &params)
                    .map_err(runtime_stage)?;
            (output, q_bound)
        }
        AgentSpec::Ppo(k) => {
            let mut env = discrete_env(cfg, env_seed)?;
            let n_actions = env.n_actions();
            let core_cfg = PpoConfig {
                gamma: k.gamma,
                lam: k.lam,
                clip: k.clip,
                lr_policy: k.lr_policy,
                lr_value: k.lr_value,
                entropy_coef: k.entropy_coef,
                epochs: k.epochs,
                horizon: k.horizon,
                beta: k.beta.clone(),
                partition: partition_config(
                    &k.ccf,
                    BeliefMode::Discrete {
                        n_actions,
                        laplace: k.ccf.laplace,
                    },
                ),
            };
            let mut agent = PpoAgent::new(env.n_states(), n_actions, core_cfg, seed)
                .map_err(config_stage)?;
            let output = train_ppo(env.as_mut(), &mut agent, &params).map_err(runtime_stage)?;
            (output, None)
        }
        AgentSpec::Sac(k) => {
            let mut env = continuous_env(cfg, env_seed)?;
            let action_dim = env.action_dim();
            let core_cfg = SacConfig {
                gamma: k.gamma,
                polyak: k.polyak,
                lr_actor: k.lr_actor,
                lr_critic: k.lr_critic,
                alpha_ent: k.alpha_ent,
                auto_alpha: k.auto_alpha,
                target_entropy: k.target_entropy.unwrap_or(-(action_dim as f64)),
                lr_alpha: k.lr_alpha,
                batch_size: k.batch_size,
                replay_capacity: k.replay_capacity,
                warmup_steps: k.warmup_steps as u64,
                updates_per_step: k.updates_per_step,
                beta: k.beta.clone(),
                partition: partition_config(
                    &k.ccf,
                    BeliefMode::Gaussian {
                        action_dim,
                        prior_mean: k.ccf.prior_mean,
                        prior_var: k.ccf.prior_var,
                        var_floor: k.ccf.var_floor,
                    },
                ),
                obs_var: k.obs_var,
                initial_log_std: k.initial_log_std,
            };
            let mut agent = SacAgent::new(
                env.feature_dim(),
                action_dim,
                env.action_bound(),
                core_cfg,
                seed,
            )
            .map_err(config_stage)?;
            let output = train_sac(env.as_mut(), &mut agent, &params).map_err(runtime_stage)?;
            (output, None)
        }
    };

    let rows = metrics_rows(cfg, seed, &output, q_bound);
    write_jsonl(&dir.join(format!("metrics_seed{seed}.jsonl")), &rows)?;
    write_checkpoints(
        &dir.join(format!("checkpoints_seed{seed}.jsonl")),
        &output.checkpoints,
    )?;
    if !output.audits.is_empty() {
        write_audits(
            &dir.join(format!("audits_seed{seed}.jsonl")),
            cfg.audit_every,
            &output.audits,
        )?;
    }

    let episodes: Vec<EpisodeRow> = output
        .records
        .iter()
        .map(|r| EpisodeRow::from_record(r, q_bound))
        .collect();
    let summary = summarize_episodes(&episodes, cfg.final_window, cfg.threshold, seed);
    Ok(SeedReport {
        seed,
        summary,
        checkpoints: output.checkpoints.len(),
        evals: output.evals.len(),
    })
}

fn eval_env(cfg: &ExperimentConfig, seed: u64) -> Result<Option<Box<dyn DiscreteActionEnv>>> {
    if cfg.eval_interval == 0 {
        return Ok(None);
    }
    // A separate instance on its own substream, so probes cannot disturb the
    // training environment's stream.
    discrete_env(cfg, stream_seed(seed, "eval-env")).map(Some)
}

/// Header first, then episodes and evaluation probes merged in step order.
/// A probe fires mid-episode, so it sorts before the episode row that
/// completes at or after its step.
fn metrics_rows(
    cfg: &ExperimentConfig,
    seed: u64,
    output: &TrainOutput,
    q_bound: Option<f64>,
) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(1 + output.records.len() + output.evals.len());
    rows.push(MetricsRow::Header {
        format_version: METRICS_FORMAT_VERSION,
        experiment: cfg.name.clone(),
        env: cfg.env_name.clone(),
        agent: cfg.agent.kind().to_string(),
        seed,
        total_steps: cfg.total_steps,
    });
    let mut evals = output.evals.iter().peekable();
    for record in &output.records {
        while let Some(eval) = evals.peek() {
            if eval.step <= record.env_steps {
                rows.push(MetricsRow::from(*eval));
                evals.next();
            } else {
                break;
            }
        }
        rows.push(MetricsRow::Episode(EpisodeRow::from_record(record, q_bound)));
    }
    for eval in evals {
        rows.push(MetricsRow::from(eval));
    }
    rows
}

fn write_checkpoints(path: &Path, checkpoints: &[Checkpoint]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HarnessError::runtime(format!("creating {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for ckpt in checkpoints {
        let line = serde_json::to_string(ckpt)
            .map_err(|e| HarnessError::runtime(format!("encoding checkpoint: {e}")))?;
        writeln!(out, "{line}")
            .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))?;
    }
    out.flush()
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
}

pub fn read_checkpoints(path: &Path) -> Result<Vec<Checkpoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::runtime(format!("missing checkpoints: {}: {e}", path.display()))
    })?;
    let mut checkpoints = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ckpt: Checkpoint = serde_json::from_str(line).map_err(|e| {
            HarnessError::runtime(format!(
                "corrupted checkpoint at {} line {}: {e}",
                path.display(),
                idx + 1
            ))
        })?;
        checkpoints.push(ckpt);
    }
    if checkpoints.is_empty() {
        return Err(HarnessError::runtime(format!(
            "{}: no checkpoints",
            path.display()
        )));
    }
    Ok(checkpoints)
}

#[derive(Serialize)]
struct AuditRow<'a> {
    format_version: u32,
    step: u64,
    #[serde(flatten)]
    report: &'a AuditReport,
}

fn write_audits(path: &Path, audit_every: u64, audits: &[AuditReport]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HarnessError::runtime(format!("creating {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for (idx, report) in audits.iter().enumerate() {
        let row = AuditRow {
            format_version: METRICS_FORMAT_VERSION,
            step: (idx as u64 + 1) * audit_every,
            report,
        };
        let line = serde_json::to_string(&row)
            .map_err(|e| HarnessError::runtime(format!("encoding audit row: {e}")))?;
        writeln!(out, "{line}")
            .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))?;
    }
    out.flush()
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
}

/// One `--grid key=v1,v2` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl GridAxis {
    pub fn parse(text: &str) -> Result<Self> {
        let Some((key, values)) = text.split_once('=') else {
            return Err(HarnessError::config(format!(
                "grid axis `{text}`: expected key=v1,v2,..."
            )));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(HarnessError::config(format!("grid axis `{text}`: empty key")));
        }
        if key == "run.out" {
            return Err(HarnessError::config(
                "grid axis `run.out`: the sweep assigns output directories itself",
            ));
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(HarnessError::config(format!(
                "grid axis `{key}`: needs at least one value"
            )));
        }
        Ok(GridAxis { key, values })
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub runs: Vec<(String, RunOutcome)>,
}

/// Runs the cartesian product of the grid over the base config. Each
/// combination lands in `<base out>/<label>`; an index CSV ties labels to
/// directories and headline numbers.
pub fn run_sweep(config_path: &Path, axes: &[GridAxis], force: bool) -> Result<SweepOutcome> {
    run_sweep_in(&output_root(), config_path, axes, force)
}

pub fn run_sweep_in(
    root: &Path,
    config_path: &Path,
    axes: &[GridAxis],
    force: bool,
) -> Result<SweepOutcome> {
    if axes.is_empty() {
        return Err(HarnessError::config("sweep needs at least one --grid axis"));
    }
    for (i, axis) in axes.iter().enumerate() {
        if axes[..i].iter().any(|a| a.key == axis.key) {
            return Err(HarnessError::config(format!(
                "grid axis `{}` given twice",
                axis.key
            )));
        }
    }

    let base_raw = RawConfig::from_file(config_path)?;
    let base_map = base_raw.echo().clone();
    let base_name = config_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment")
        .to_string();
    // Validate the base config before touching the filesystem.
    let base_cfg =
        ExperimentConfig::from_raw(base_name.clone(), RawConfig::from_map(base_map.clone()))?;
    let sweep_dir = root.join(&base_cfg.out_dir);
    claim_dir(&sweep_dir, force)?;

    let mut runs = Vec::new();
    let mut counters = vec![0usize; axes.len()];
    loop {
        let mut map = base_map.clone();
        let mut label_parts = Vec::with_capacity(axes.len());
        for (axis, &idx) in axes.iter().zip(&counters) {
            let value = &axis.values[idx];
            map.insert(axis.key.clone(), value.clone());
            label_parts.push(format!("{}={}", axis.key, value));
        }
        let label = sanitize_label(&label_parts.join("__"));
        map.insert(
            "run.out".to_string(),
            format!("{}/{}", base_cfg.out_dir, label),
        );
        let cfg = ExperimentConfig::from_raw(
            format!("{base_name}__{label}"),
            RawConfig::from_map(map),
        )?;
        // The sweep directory was already claimed wholesale.
        let outcome = run_experiment_in(root, &cfg, false)?;
        runs.push((label, outcome));

        // Advance the odometer.
        let mut done = true;
        for (digit, axis) in counters.iter_mut().zip(axes) {
            *digit += 1;
            if *digit < axis.values.len() {
                done = false;
                break;
            }
            *digit = 0;
        }
        if done {
            break;
        }
    }

    write_sweep_index(&sweep_dir.join("sweep_index.csv"), &runs)?;
    Ok(SweepOutcome {
        dir: sweep_dir,
        runs,
    })
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '=') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn write_sweep_index(path: &Path, runs: &[(String, RunOutcome)]) -> Result<()> {
    let mut text = String::from(
        "format_version,label,dir,final_window_mean,final_window_std,steps_to_threshold_median\n",
    );
    for (label, outcome) in runs {
        let steps = outcome
            .aggregate
            .steps_to_threshold
            .map_or(String::new(), |s| s.to_string());
        text.push_str(&format!(
            "{METRICS_FORMAT_VERSION},{label},{},{},{},{steps}\n",
            outcome.dir.display(),
            outcome.aggregate.final_window_mean,
            outcome.aggregate.final_window_std,
        ));
    }
    std::fs::write(path, text)
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
}
