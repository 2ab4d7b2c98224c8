//! Convergence check of a finished tabular run against the exact fixed
//! point: rebuilds the environment's MDP, solves it by value iteration, and
//! measures the sup-norm gap of every checkpointed Q table.

use crate::config::{ExperimentConfig, RawConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::METRICS_FORMAT_VERSION;
use crate::runner::{read_checkpoints, read_config_echo};
use cbdrl_core::agents::convergence_probe;
use cbdrl_core::envs::{make_env, EnvHandle};
use cbdrl_core::rng::{stream_seed, STREAM_ENV};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct SeedDeltas {
    pub seed: u64,
    /// Environment steps at each checkpoint.
    pub steps: Vec<u64>,
    /// `max |Q_t - Q*|` at each checkpoint.
    pub sup_deltas: Vec<f64>,
    pub final_delta: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub format_version: u32,
    pub env: String,
    pub tolerance: f64,
    pub passed: bool,
    pub seeds: Vec<SeedDeltas>,
}

/// Checks every seed of the run in `dir` and writes `oracle_report.json`
/// there. A failing verdict is data, not an error: the report says so and
/// the call still succeeds. Unreadable or corrupted inputs are errors, and
/// nothing is written.
pub fn oracle_check(dir: &Path, tolerance: f64) -> Result<OracleReport> {
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(HarnessError::config(format!(
            "tolerance must be positive and finite, got {tolerance}"
        )));
    }
    let echo = read_config_echo(dir)?;
    let cfg = ExperimentConfig::from_raw(echo.name, RawConfig::from_map(echo.keys))?;
    if !cfg.agent.is_tabular() {
        return Err(HarnessError::config(format!(
            "oracle check needs a tabular run, but this one trained `{}`",
            cfg.agent.kind()
        )));
    }
    let gamma = cfg.agent.gamma();

    // The exact view is seed-independent; any seed builds the same MDP.
    let env = match make_env(
        &cfg.env_name,
        &cfg.env_params,
        stream_seed(cfg.seeds[0], STREAM_ENV),
    )
    .map_err(HarnessError::config)?
    {
        EnvHandle::Discrete(env) => env,
        EnvHandle::Continuous(_) => {
            return Err(HarnessError::config(format!(
                "environment `{}` is continuous; no exact Q* exists here",
                cfg.env_name
            )))
        }
    };
    let mdp = match env.tabular_view(gamma) {
        Some(view) => view.map_err(HarnessError::runtime)?,
        None => {
            return Err(HarnessError::config(format!(
                "environment `{}` exposes no exact tabular view to solve",
                cfg.env_name
            )))
        }
    };
    let q_star = mdp
        .value_iteration(1e-10)
        .map_err(HarnessError::runtime)?
        .q;

    // Load and validate every seed's checkpoints before writing anything,
    // so a corrupted file can never leave a partial report behind.
    let mut loaded = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let path = dir.join(format!("checkpoints_seed{seed}.jsonl"));
        loaded.push((seed, read_checkpoints(&path)?));
    }

    let mut seeds = Vec::with_capacity(loaded.len());
    let mut all_passed = true;
    for (seed, checkpoints) in &loaded {
        let series =
            convergence_probe(checkpoints, &q_star).map_err(HarnessError::runtime)?;
        let final_delta = *series.sup_deltas.last().expect("probe rejects empty input");
        let (passed, reason) = if series.sup_deltas.len() < 2 {
            (
                false,
                Some("insufficient data: need at least two checkpoints to see movement".into()),
            )
        } else if final_delta <= tolerance {
            (true, None)
        } else {
            (
                false,
                Some(format!(
                    "final sup-norm delta {final_delta:.6e} exceeds tolerance {tolerance:.6e}"
                )),
            )
        };
        all_passed &= passed;
        seeds.push(SeedDeltas {
            seed: *seed,
            steps: series.steps,
            sup_deltas: series.sup_deltas,
            final_delta,
            passed,
            reason,
        });
    }

    let report = OracleReport {
        format_version: METRICS_FORMAT_VERSION,
        env: cfg.env_name.clone(),
        tolerance,
        passed: all_passed,
        seeds,
    };
    let path = dir.join("oracle_report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| HarnessError::runtime(format!("encoding oracle report: {e}")))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(report)
}
