//! Run-vs-run comparison: sample efficiency (median steps-to-threshold) and
//! final performance (final-window mean), with a verdict.

use crate::error::{HarnessError, Result};
use crate::metrics::{read_summary_csv, SeedSummary, METRICS_FORMAT_VERSION};
use crate::runner::read_config_echo;
use serde::Serialize;
use std::path::Path;

/// Fraction of the baseline's |final mean| the candidate may lose while
/// still counting as "not worse".
pub const FINAL_MEAN_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Strictly fewer median steps to threshold, and final mean within
    /// tolerance of the baseline.
    CandidateBetter,
    /// Identical headline numbers.
    NoDifference,
    NotBetter,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSeed {
    pub seed: u64,
    pub final_window_mean: f64,
    pub steps_to_threshold: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSide {
    pub dir: String,
    pub final_window_mean: f64,
    pub final_window_std: f64,
    pub median_steps_to_threshold: Option<u64>,
    pub per_seed: Vec<CompareSeed>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    pub threshold: Option<f64>,
    /// Absolute slack allowed on the candidate's final mean.
    pub tolerance: f64,
    pub baseline: CompareSide,
    pub candidate: CompareSide,
    pub verdict: Verdict,
}

fn load_side(dir: &Path) -> Result<(CompareSide, Option<f64>)> {
    let summary = read_summary_csv(&dir.join("summary.csv"))?;
    let per_seed = summary
        .per_seed
        .iter()
        .map(|row: &SeedSummary| CompareSeed {
            seed: row.seed.unwrap_or(0),
            final_window_mean: row.final_window_mean,
            steps_to_threshold: row.steps_to_threshold,
        })
        .collect();
    Ok((
        CompareSide {
            dir: dir.display().to_string(),
            final_window_mean: summary.aggregate.final_window_mean,
            final_window_std: summary.aggregate.final_window_std,
            median_steps_to_threshold: summary.aggregate.steps_to_threshold,
            per_seed,
        },
        summary.threshold,
    ))
}

/// Keys that must agree for steps-to-threshold numbers to be comparable.
fn comparable_keys(echo: &std::collections::BTreeMap<String, String>) -> Vec<(String, String)> {
    echo.iter()
        .filter(|(k, _)| k.starts_with("env.") || *k == "run.steps" || *k == "run.threshold")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

pub fn compare_runs(baseline_dir: &Path, candidate_dir: &Path) -> Result<ComparisonReport> {
    let base_echo = read_config_echo(baseline_dir)?;
    let cand_echo = read_config_echo(candidate_dir)?;
    let base_keys = comparable_keys(&base_echo.keys);
    let cand_keys = comparable_keys(&cand_echo.keys);
    if base_keys != cand_keys {
        let base_map: std::collections::BTreeMap<_, _> = base_keys.into_iter().collect();
        let cand_map: std::collections::BTreeMap<_, _> = cand_keys.into_iter().collect();
        let mut diffs = Vec::new();
        for key in base_map.keys().chain(cand_map.keys()) {
            let b = base_map.get(key);
            let c = cand_map.get(key);
            if b != c && !diffs.contains(key) {
                diffs.push(key.clone());
            }
        }
        return Err(HarnessError::config(format!(
            "runs are not comparable; differing key(s): {}",
            diffs.join(", ")
        )));
    }

    let (baseline, base_threshold) = load_side(baseline_dir)?;
    let (candidate, cand_threshold) = load_side(candidate_dir)?;
    if base_threshold != cand_threshold {
        return Err(HarnessError::config(format!(
            "runs are not comparable; thresholds differ ({base_threshold:?} vs {cand_threshold:?})"
        )));
    }

    let tolerance = FINAL_MEAN_TOLERANCE * baseline.final_window_mean.abs();
    let verdict = decide(
        baseline.median_steps_to_threshold,
        baseline.final_window_mean,
        candidate.median_steps_to_threshold,
        candidate.final_window_mean,
        tolerance,
    );
    Ok(ComparisonReport {
        format_version: METRICS_FORMAT_VERSION,
        threshold: base_threshold,
        tolerance,
        baseline,
        candidate,
        verdict,
    })
}

/// The decision rule, exposed for direct testing: candidate-better needs a
/// strictly lower median steps-to-threshold (an unsolved side counts as
/// infinite) and a final mean no more than `tolerance` below the baseline's.
pub fn decide(
    base_median: Option<u64>,
    base_mean: f64,
    cand_median: Option<u64>,
    cand_mean: f64,
    tolerance: f64,
) -> Verdict {
    if base_median == cand_median && base_mean == cand_mean {
        return Verdict::NoDifference;
    }
    let strictly_faster = match (cand_median, base_median) {
        (Some(c), Some(b)) => c < b,
        (Some(_), None) => true,
        (None, _) => false,
    };
    if strictly_faster && cand_mean >= base_mean - tolerance {
        Verdict::CandidateBetter
    } else {
        Verdict::NotBetter
    }
}
