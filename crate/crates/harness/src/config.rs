//! Experiment configuration.
//!
//! The native format is flat `key = value` text with dotted sections
//! (`env.*`, `agent.*`, `schedule.*`, `ccf.*`, `run.*`), chosen to diff
//! cleanly. A JSON mirror is accepted: nested objects flatten into the same
//! dotted keys, scalar arrays join with commas. Unknown, duplicate, and
//! malformed keys are all errors that name the offender.

use crate::error::{HarnessError, Result};
use cbdrl_core::agents::schedules::{AlphaSchedule, AnnealKind, EpsilonSchedule, SmoothingAnneal};
use cbdrl_core::belief::BetaSchedule;
use cbdrl_core::ccf::{DistanceId, FeatureMapId};
use cbdrl_core::envs::EnvParams;
use cbdrl_core::smoothing::SmoothingStrategy;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

/// Raw dotted-key map with consumption tracking: every key must be claimed
/// by exactly one reader, and leftovers are reported by name.
#[derive(Debug, Clone)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_text(text)
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        RawConfig {
            map,
            consumed: BTreeSet::new(),
        }
    }

    fn parse_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(HarnessError::config(format!("line {}: empty key", idx + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(HarnessError::config(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self::from_map(map))
    }

    fn parse_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| HarnessError::config(format!("invalid JSON config: {e}")))?;
        let serde_json::Value::Object(root) = value else {
            return Err(HarnessError::config("JSON config must be an object"));
        };
        let mut map = BTreeMap::new();
        flatten_json("", &root, &mut map)?;
        Ok(Self::from_map(map))
    }

    /// Value for `key`, marking it consumed.
    pub fn get(&mut self, key: &str) -> Option<String> {
        let value = self.map.get(key).cloned();
        if value.is_some() {
            self.consumed.insert(key.to_string());
        }
        value
    }

    pub fn require(&mut self, key: &str) -> Result<String> {
        self.get(key)
            .ok_or_else(|| HarnessError::config(format!("missing required key `{key}`")))
    }

    /// Parses `key` if present; a malformed value is an error naming it.
    pub fn get_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                HarnessError::config(format!("key `{key}`: cannot parse value `{raw}`"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// Removes every `prefix.`-qualified key into a new map with the prefix
    /// stripped, marking them consumed.
    pub fn drain_prefix(&mut self, prefix: &str) -> BTreeMap<String, String> {
        let qualified = format!("{prefix}.");
        let keys: Vec<String> = self
            .map
            .keys()
            .filter(|k| k.starts_with(&qualified))
            .cloned()
            .collect();
        let mut out = BTreeMap::new();
        for key in keys {
            let value = self.map.get(&key).cloned().unwrap_or_default();
            self.consumed.insert(key.clone());
            out.insert(key[qualified.len()..].to_string(), value);
        }
        out
    }

    /// The full raw map, for echoing into run artifacts.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    /// Errors if any key was never consumed, naming each one.
    pub fn finish(&self) -> Result<()> {
        let leftover: Vec<&String> = self
            .map
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if leftover.is_empty() {
            Ok(())
        } else {
            let names: Vec<String> = leftover.iter().map(|k| format!("`{k}`")).collect();
            Err(HarnessError::config(format!(
                "unknown key(s): {}",
                names.join(", ")
            )))
        }
    }
}

fn flatten_json(
    prefix: &str,
    obj: &serde_json::Map<String, serde_json::Value>,
    out: &mut BTreeMap<String, String>,
) -> Result<()> {
    for (name, value) in obj {
        let key = if prefix.is_empty() {
            name.clone()
        } else {
            format!("{prefix}.{name}")
        };
        match value {
            serde_json::Value::Object(inner) => flatten_json(&key, inner, out)?,
            serde_json::Value::Array(items) => {
                let mut parts = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        serde_json::Value::String(s) => parts.push(s.clone()),
                        serde_json::Value::Number(n) => parts.push(n.to_string()),
                        serde_json::Value::Bool(b) => parts.push(b.to_string()),
                        other => {
                            return Err(HarnessError::config(format!(
                                "key `{key}`: arrays may only hold scalars, got {other}"
                            )))
                        }
                    }
                }
                out.insert(key, parts.join(","));
            }
            serde_json::Value::String(s) => {
                out.insert(key, s.clone());
            }
            serde_json::Value::Number(n) => {
                out.insert(key, n.to_string());
            }
            serde_json::Value::Bool(b) => {
                out.insert(key, b.to_string());
            }
            serde_json::Value::Null => {
                return Err(HarnessError::config(format!("key `{key}`: null value")));
            }
        }
    }
    Ok(())
}

/// Category/belief knobs shared by the belief-guided agents.
#[derive(Debug, Clone)]
pub struct CcfKnobs {
    pub epsilon: f64,
    pub delta: f64,
    pub max_categories: usize,
    pub feature_map: FeatureMapId,
    pub distance: DistanceId,
    pub laplace: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub var_floor: f64,
    pub track_diagnostics: bool,
}

#[derive(Debug, Clone)]
pub struct QKnobs {
    pub gamma: f64,
    pub alpha: AlphaSchedule,
    pub epsilon: EpsilonSchedule,
}

#[derive(Debug, Clone)]
pub struct CbdqKnobs {
    pub q: QKnobs,
    pub smoothing: SmoothingStrategy,
    pub anneal: Option<SmoothingAnneal>,
    pub beta: BetaSchedule,
    pub ccf: CcfKnobs,
}

#[derive(Debug, Clone)]
pub struct PpoKnobs {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub horizon: usize,
    pub beta: BetaSchedule,
    pub ccf: CcfKnobs,
}

#[derive(Debug, Clone)]
pub struct SacKnobs {
    pub gamma: f64,
    pub polyak: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub alpha_ent: f64,
    pub auto_alpha: bool,
    /// Defaults to `-action_dim` once the environment is known.
    pub target_entropy: Option<f64>,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub obs_var: f64,
    pub initial_log_std: f64,
    pub beta: BetaSchedule,
    pub ccf: CcfKnobs,
}

#[derive(Debug, Clone)]
pub enum AgentSpec {
    Cbdq(CbdqKnobs),
    QLearning(QKnobs),
    Ppo(PpoKnobs),
    Sac(SacKnobs),
}

impl AgentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::Cbdq(_) => "cbdq",
            AgentSpec::QLearning(_) => "qlearning",
            AgentSpec::Ppo(_) => "cbdppo",
            AgentSpec::Sac(_) => "cbdsac",
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            AgentSpec::Cbdq(k) => k.q.gamma,
            AgentSpec::QLearning(k) => k.gamma,
            AgentSpec::Ppo(k) => k.gamma,
            AgentSpec::Sac(k) => k.gamma,
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, AgentSpec::Cbdq(_) | AgentSpec::QLearning(_))
    }
}

/// A fully validated experiment: what to run, how long, where to put it.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub env_name: String,
    pub env_params: EnvParams,
    pub agent: AgentSpec,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// 0 disables greedy evaluation probes.
    pub eval_interval: u64,
    pub eval_episodes: u32,
    /// 0 means only the final checkpoint is written.
    pub checkpoint_every: u64,
    /// 0 disables coherence audits.
    pub audit_every: u64,
    pub audit_reassign: bool,
    pub out_dir: String,
    /// Episode return that counts as "solved" for steps-to-threshold.
    pub threshold: Option<f64>,
    /// Episodes in the trailing window used for final-return statistics.
    pub final_window: usize,
    /// Raw key-value echo, written next to the artifacts.
    pub echo: BTreeMap<String, String>,
}

pub const DEFAULT_SEEDS: [u64; 3] = [123, 321, 666];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = RawConfig::from_file(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment")
            .to_string();
        Self::from_raw(name, raw)
    }

    pub fn from_str_named(name: &str, text: &str) -> Result<Self> {
        Self::from_raw(name.to_string(), RawConfig::parse(text)?)
    }

    pub fn from_raw(name: String, mut raw: RawConfig) -> Result<Self> {
        let echo = raw.echo().clone();
        let env_name = raw.require("env.name")?;
        let mut env_params: EnvParams = raw.drain_prefix("env");
        env_params.remove("name");

        let agent = parse_agent(&mut raw)?;

        let total_steps: u64 = raw
            .get_parsed("run.steps")?
            .ok_or_else(|| HarnessError::config("missing required key `run.steps`"))?;
        if total_steps == 0 {
            return Err(HarnessError::config("key `run.steps`: must be positive"));
        }
        let seeds = parse_seeds(&mut raw)?;
        let eval_interval: u64 = raw.get_or("run.eval_interval", 0)?;
        let eval_episodes: u32 = raw.get_or("run.eval_episodes", 3)?;
        if eval_interval > 0 && !agent.is_tabular() {
            return Err(HarnessError::config(
                "key `run.eval_interval`: greedy evaluation probes support the tabular agents \
                 (cbdq, qlearning) only",
            ));
        }
        if eval_interval > 0 && eval_episodes == 0 {
            return Err(HarnessError::config(
                "key `run.eval_episodes`: must be positive when run.eval_interval is set",
            ));
        }
        let checkpoint_every: u64 = raw.get_or("run.checkpoint_every", 0)?;
        let audit_every: u64 = raw.get_or("run.audit_every", 0)?;
        let audit_reassign: bool = raw.get_or("run.audit_reassign", false)?;
        let out_dir = raw.get("run.out").unwrap_or_else(|| name.clone());
        if out_dir.is_empty() {
            return Err(HarnessError::config("key `run.out`: must not be empty"));
        }
        // The runner deletes this directory under --force, so it must stay
        // inside the output root.
        let out_path = Path::new(&out_dir);
        if out_path.is_absolute()
            || out_path
                .components()
                .any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(HarnessError::config(
                "key `run.out`: must be a relative path without `..` (it lives under the \
                 output root)",
            ));
        }
        let default_threshold = match env_name.as_str() {
            "gridworld" | "cliff" => Some(0.8),
            _ => None,
        };
        let threshold = match raw.get_parsed::<f64>("run.threshold")? {
            Some(t) => Some(t),
            None => default_threshold,
        };
        let final_window: usize = raw.get_or("run.final_window", 20)?;
        if final_window == 0 {
            return Err(HarnessError::config("key `run.final_window`: must be positive"));
        }

        raw.finish()?;
        Ok(ExperimentConfig {
            name,
            env_name,
            env_params,
            agent,
            seeds,
            total_steps,
            eval_interval,
            eval_episodes,
            checkpoint_every,
            audit_every,
            audit_reassign,
            out_dir,
            threshold,
            final_window,
            echo,
        })
    }
}

fn parse_seeds(raw: &mut RawConfig) -> Result<Vec<u64>> {
    let Some(text) = raw.get("run.seeds") else {
        return Ok(DEFAULT_SEEDS.to_vec());
    };
    let mut seeds = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let seed: u64 = part.parse().map_err(|_| {
            HarnessError::config(format!("key `run.seeds`: cannot parse seed `{part}`"))
        })?;
        if seeds.contains(&seed) {
            return Err(HarnessError::config(format!(
                "key `run.seeds`: seed {seed} repeats; outputs would collide"
            )));
        }
        seeds.push(seed);
    }
    if seeds.is_empty() {
        return Err(HarnessError::config("key `run.seeds`: needs at least one seed"));
    }
    Ok(seeds)
}

fn parse_alpha(raw: &mut RawConfig) -> Result<AlphaSchedule> {
    match raw.get("agent.alpha") {
        None => Ok(AlphaSchedule::InverseVisit),
        Some(text) if text == "inverse_visit" => Ok(AlphaSchedule::InverseVisit),
        Some(text) => {
            let rate: f64 = text.parse().map_err(|_| {
                HarnessError::config(format!(
                    "key `agent.alpha`: expected a rate or `inverse_visit`, got `{text}`"
                ))
            })?;
            Ok(AlphaSchedule::Constant(rate))
        }
    }
}

fn parse_epsilon(raw: &mut RawConfig) -> Result<EpsilonSchedule> {
    Ok(EpsilonSchedule {
        start: raw.get_or("agent.epsilon.start", 1.0)?,
        end: raw.get_or("agent.epsilon.end", 0.05)?,
        decay_steps: raw.get_or("agent.epsilon.decay_steps", 10_000)?,
    })
}

fn parse_smoothing(raw: &mut RawConfig) -> Result<(SmoothingStrategy, Option<SmoothingAnneal>)> {
    let kind = raw
        .get("agent.smoothing.kind")
        .unwrap_or_else(|| "softmax".to_string());
    let strategy = match kind.as_str() {
        "softmax" => SmoothingStrategy::Softmax {
            temperature: raw.get_or("agent.smoothing.temperature", 1.0)?,
        },
        "clipped_max" => SmoothingStrategy::ClippedMax {
            tau: raw.get_or("agent.smoothing.tau", 0.1)?,
        },
        "clipped_softmax" => SmoothingStrategy::ClippedSoftmax {
            top_k: raw.get_or("agent.smoothing.top_k", 2)?,
            temperature: raw.get_or("agent.smoothing.temperature", 1.0)?,
        },
        "bayesian_softmax" => SmoothingStrategy::BayesianSoftmax {
            prior_mean: raw.get_or("agent.smoothing.prior_mean", 0.0)?,
            prior_var: raw.get_or("agent.smoothing.prior_var", 1.0)?,
            obs_var: raw.get_or("agent.smoothing.obs_var", 1.0)?,
            temperature: raw.get_or("agent.smoothing.temperature", 1.0)?,
        },
        other => {
            return Err(HarnessError::config(format!(
                "key `agent.smoothing.kind`: unknown strategy `{other}` (expected softmax, \
                 clipped_max, clipped_softmax, or bayesian_softmax)"
            )))
        }
    };
    let anneal = match raw.get("agent.smoothing.anneal.kind") {
        None => None,
        Some(kind) => {
            let kind = match kind.as_str() {
                "geometric" => AnnealKind::Geometric,
                "linear" => AnnealKind::Linear,
                other => {
                    return Err(HarnessError::config(format!(
                        "key `agent.smoothing.anneal.kind`: unknown kind `{other}` \
                         (expected geometric or linear)"
                    )))
                }
            };
            let final_value: f64 = raw
                .get_parsed("agent.smoothing.anneal.final")?
                .ok_or_else(|| {
                    HarnessError::config("missing required key `agent.smoothing.anneal.final`")
                })?;
            let steps: u64 = raw.get_parsed("agent.smoothing.anneal.steps")?.ok_or_else(|| {
                HarnessError::config("missing required key `agent.smoothing.anneal.steps`")
            })?;
            Some(SmoothingAnneal {
                final_value,
                steps,
                kind,
            })
        }
    };
    Ok((strategy, anneal))
}

fn parse_beta(raw: &mut RawConfig) -> Result<BetaSchedule> {
    let kind = raw
        .get("schedule.beta.kind")
        .unwrap_or_else(|| "constant".to_string());
    match kind.as_str() {
        "constant" => Ok(BetaSchedule::Constant(
            raw.get_or("schedule.beta.value", 0.3)?,
        )),
        "linear" => Ok(BetaSchedule::LinearRamp {
            beta0: raw.get_or("schedule.beta.beta0", 0.0)?,
            beta_star: raw.get_or("schedule.beta.beta_star", 0.5)?,
            rate: raw.get_or("schedule.beta.rate", 1e-4)?,
        }),
        "exp" => Ok(BetaSchedule::ExponentialDecay {
            beta0: raw.get_or("schedule.beta.beta0", 0.5)?,
            beta_star: raw.get_or("schedule.beta.beta_star", 0.0)?,
            rate: raw.get_or("schedule.beta.rate", 1e-4)?,
        }),
        other => Err(HarnessError::config(format!(
            "key `schedule.beta.kind`: unknown kind `{other}` (expected constant, linear, or exp)"
        ))),
    }
}

fn parse_ccf(raw: &mut RawConfig) -> Result<CcfKnobs> {
    let feature_map = match raw.get("ccf.feature_map") {
        None => FeatureMapId::Identity,
        Some(name) => FeatureMapId::parse(&name)
            .map_err(|e| HarnessError::config(format!("key `ccf.feature_map`: {e}")))?,
    };
    let distance = match raw.get("ccf.distance") {
        None => DistanceId::Euclidean,
        Some(name) => DistanceId::parse(&name)
            .map_err(|e| HarnessError::config(format!("key `ccf.distance`: {e}")))?,
    };
    Ok(CcfKnobs {
        epsilon: raw.get_or("ccf.epsilon", 0.25)?,
        delta: raw.get_or("ccf.delta", f64::INFINITY)?,
        max_categories: raw.get_or("ccf.max_categories", 256)?,
        feature_map,
        distance,
        laplace: raw.get_or("ccf.laplace", 1.0)?,
        prior_mean: raw.get_or("ccf.prior_mean", 0.0)?,
        prior_var: raw.get_or("ccf.prior_var", 1.0)?,
        var_floor: raw.get_or("ccf.var_floor", 1e-6)?,
        track_diagnostics: raw.get_or("ccf.track_diagnostics", false)?,
    })
}

fn parse_agent(raw: &mut RawConfig) -> Result<AgentSpec> {
    let kind = raw.require("agent.kind")?;
    let gamma: f64 = raw.get_or("agent.gamma", 0.99)?;
    match kind.as_str() {
        "cbdq" => {
            let q = QKnobs {
                gamma,
                alpha: parse_alpha(raw)?,
                epsilon: parse_epsilon(raw)?,
            };
            let (smoothing, anneal) = parse_smoothing(raw)?;
            Ok(AgentSpec::Cbdq(CbdqKnobs {
                q,
                smoothing,
                anneal,
                beta: parse_beta(raw)?,
                ccf: parse_ccf(raw)?,
            }))
        }
        "qlearning" => Ok(AgentSpec::QLearning(QKnobs {
            gamma,
            alpha: parse_alpha(raw)?,
            epsilon: parse_epsilon(raw)?,
        })),
        "cbdppo" => Ok(AgentSpec::Ppo(PpoKnobs {
            gamma,
            lam: raw.get_or("agent.lam", 0.95)?,
            clip: raw.get_or("agent.clip", 0.2)?,
            lr_policy: raw.get_or("agent.lr_policy", 0.05)?,
            lr_value: raw.get_or("agent.lr_value", 0.1)?,
            entropy_coef: raw.get_or("agent.entropy_coef", 0.01)?,
            epochs: raw.get_or("agent.epochs", 4)?,
            horizon: raw.get_or("agent.horizon", 64)?,
            beta: parse_beta(raw)?,
            ccf: parse_ccf(raw)?,
        })),
        "cbdsac" => Ok(AgentSpec::Sac(SacKnobs {
            gamma,
            polyak: raw.get_or("agent.polyak", 0.01)?,
            lr_actor: raw.get_or("agent.lr_actor", 3e-4)?,
            lr_critic: raw.get_or("agent.lr_critic", 3e-3)?,
            alpha_ent: raw.get_or("agent.alpha_ent", 0.2)?,
            auto_alpha: raw.get_or("agent.auto_alpha", false)?,
            target_entropy: raw.get_parsed("agent.target_entropy")?,
            lr_alpha: raw.get_or("agent.lr_alpha", 1e-3)?,
            batch_size: raw.get_or("agent.batch_size", 64)?,
            replay_capacity: raw.get_or("agent.replay_capacity", 10_000)?,
            warmup_steps: raw.get_or("agent.warmup_steps", 500)?,
            updates_per_step: raw.get_or("agent.updates_per_step", 1)?,
            obs_var: raw.get_or("agent.obs_var", 0.25)?,
            initial_log_std: raw.get_or("agent.initial_log_std", -0.5)?,
            beta: parse_beta(raw)?,
            ccf: parse_ccf(raw)?,
        })),
        other => Err(HarnessError::config(format!(
            "key `agent.kind`: unknown agent `{other}` (expected cbdq, qlearning, cbdppo, \
             or cbdsac)"
        ))),
    }
}
