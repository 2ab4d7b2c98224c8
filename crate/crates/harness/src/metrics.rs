//! Run artifacts: JSONL metrics streams and the CSV summary.
//!
//! Every artifact carries `format_version` so downstream readers can refuse
//! files they don't understand instead of misparsing them.

use crate::error::{HarnessError, Result};
use cbdrl_core::agents::{EvalRecord, RunRecord};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

pub const METRICS_FORMAT_VERSION: u32 = 1;

/// One line of a per-seed metrics stream. The first line is always a
/// `Header`; episodes and evaluation probes follow in step order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum MetricsRow {
    Header {
        format_version: u32,
        experiment: String,
        env: String,
        agent: String,
        seed: u64,
        total_steps: u64,
    },
    Episode(EpisodeRow),
    Eval {
        step: u64,
        episodes: u32,
        mean_return: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpisodeRow {
    pub episode: u64,
    pub env_steps: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: u64,
    pub beta: f64,
    pub epsilon: f64,
    pub categories: u64,
    pub overflow: u64,
    pub q_abs_max: f64,
    /// Distance from the largest learned |Q| to the discounted-return bound,
    /// when a reward bound is known for the environment. Negative means the
    /// bound is violated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_bound_margin: Option<f64>,
    pub wall_time_s: f64,
}

impl EpisodeRow {
    pub fn from_record(record: &RunRecord, q_bound: Option<f64>) -> Self {
        EpisodeRow {
            episode: record.episode,
            env_steps: record.env_steps,
            ret: record.ret,
            steps: record.steps,
            beta: record.beta,
            epsilon: record.epsilon,
            categories: record.categories,
            overflow: record.overflow,
            q_abs_max: record.q_abs_max,
            q_bound_margin: q_bound.map(|bound| bound - record.q_abs_max),
            wall_time_s: record.wall_time_s,
        }
    }
}

impl From<&EvalRecord> for MetricsRow {
    fn from(eval: &EvalRecord) -> Self {
        MetricsRow::Eval {
            step: eval.step,
            episodes: eval.episodes,
            mean_return: eval.mean_return,
        }
    }
}

pub fn write_jsonl(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HarnessError::runtime(format!("creating {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| HarnessError::runtime(format!("encoding metrics row: {e}")))?;
        writeln!(out, "{line}")
            .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))?;
    }
    out.flush()
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::runtime(format!("opening {}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line =
            line.map_err(|e| HarnessError::runtime(format!("reading {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricsRow = serde_json::from_str(&line).map_err(|e| {
            HarnessError::runtime(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        if idx == 0 {
            let MetricsRow::Header { format_version, .. } = &row else {
                return Err(HarnessError::runtime(format!(
                    "{}: first row must be a header",
                    path.display()
                )));
            };
            if *format_version != METRICS_FORMAT_VERSION {
                return Err(HarnessError::runtime(format!(
                    "{}: format_version {} unsupported (expected {})",
                    path.display(),
                    format_version,
                    METRICS_FORMAT_VERSION
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::runtime(format!(
            "{}: empty metrics file",
            path.display()
        )));
    }
    Ok(rows)
}

/// Per-seed learning-curve statistics. The aggregate row (`seed` = None)
/// averages the per-seed means; its std is the population standard deviation
/// across seed means, and its steps-to-threshold is the median across seeds
/// (unsolved seeds sort as +inf).
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: Option<u64>,
    pub episodes: u64,
    pub final_window_mean: f64,
    pub final_window_std: f64,
    /// Cumulative env steps when an episode return first reached the
    /// threshold; None if it never did or no threshold was set.
    pub steps_to_threshold: Option<u64>,
}

/// Statistics over one seed's episode returns.
pub fn summarize_episodes(
    episodes: &[EpisodeRow],
    final_window: usize,
    threshold: Option<f64>,
    seed: u64,
) -> SeedSummary {
    let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
    let window = &returns[returns.len().saturating_sub(final_window)..];
    let (mean, std) = mean_and_population_std(window);
    let steps_to_threshold = threshold.and_then(|t| {
        episodes
            .iter()
            .find(|e| e.ret >= t)
            .map(|e| e.env_steps)
    });
    SeedSummary {
        seed: Some(seed),
        episodes: episodes.len() as u64,
        final_window_mean: mean,
        final_window_std: std,
        steps_to_threshold,
    }
}

/// Collapses per-seed rows into the aggregate row.
pub fn aggregate(per_seed: &[SeedSummary]) -> SeedSummary {
    let means: Vec<f64> = per_seed.iter().map(|s| s.final_window_mean).collect();
    let (mean, std) = mean_and_population_std(&means);
    let episodes = per_seed.iter().map(|s| s.episodes).sum();
    SeedSummary {
        seed: None,
        episodes,
        final_window_mean: mean,
        final_window_std: std,
        steps_to_threshold: median_steps(per_seed),
    }
}

/// Median steps-to-threshold across seeds. A seed that never reached the
/// threshold counts as +inf, so the median exists only when a strict
/// majority of seeds solved the task.
pub fn median_steps(per_seed: &[SeedSummary]) -> Option<u64> {
    if per_seed.is_empty() {
        return None;
    }
    let mut values: Vec<Option<u64>> = per_seed.iter().map(|s| s.steps_to_threshold).collect();
    // None sorts last, standing in for +inf.
    values.sort_by_key(|v| v.map_or((1, 0), |x| (0, x)));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        // Even count: average the middle pair; if either is unsolved the
        // median is unsolved.
        match (values[n / 2 - 1], values[n / 2]) {
            (Some(a), Some(b)) => Some((a + b) / 2),
            _ => None,
        }
    }
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const SUMMARY_HEADER: &str =
    "format_version,scope,seed,episodes,final_window_mean,final_window_std,steps_to_threshold,threshold";

pub fn write_summary_csv(
    path: &Path,
    per_seed: &[SeedSummary],
    agg: &SeedSummary,
    threshold: Option<f64>,
) -> Result<()> {
    let mut text = String::new();
    text.push_str(SUMMARY_HEADER);
    text.push('\n');
    for row in per_seed.iter().chain(std::iter::once(agg)) {
        let scope = if row.seed.is_some() { "seed" } else { "aggregate" };
        let seed = row.seed.map_or(String::new(), |s| s.to_string());
        let steps = row
            .steps_to_threshold
            .map_or(String::new(), |s| s.to_string());
        let thresh = threshold.map_or(String::new(), fmt_f64);
        text.push_str(&format!(
            "{METRICS_FORMAT_VERSION},{scope},{seed},{},{},{},{steps},{thresh}\n",
            row.episodes,
            fmt_f64(row.final_window_mean),
            fmt_f64(row.final_window_std),
        ));
    }
    std::fs::write(path, text)
        .map_err(|e| HarnessError::runtime(format!("writing {}: {e}", path.display())))
}

/// `Display` on f64 is shortest-round-trip, so the CSV loses no precision.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryFile {
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: SeedSummary,
    pub threshold: Option<f64>,
}

pub fn read_summary_csv(path: &Path) -> Result<SummaryFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::runtime(format!("opening {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::runtime(format!("{}: empty summary", path.display())))?;
    if header != SUMMARY_HEADER {
        return Err(HarnessError::runtime(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut per_seed = Vec::new();
    let mut agg = None;
    let mut threshold = None;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(HarnessError::runtime(format!(
                "{} line {}: expected 8 fields, got {}",
                path.display(),
                idx + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            HarnessError::runtime(format!("{} line {}: bad {what}", path.display(), idx + 2))
        };
        let version: u32 = fields[0].parse().map_err(|_| bad("format_version"))?;
        if version != METRICS_FORMAT_VERSION {
            return Err(HarnessError::runtime(format!(
                "{}: format_version {version} unsupported",
                path.display()
            )));
        }
        let seed = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse().map_err(|_| bad("seed"))?)
        };
        let row = SeedSummary {
            seed,
            episodes: fields[3].parse().map_err(|_| bad("episodes"))?,
            final_window_mean: fields[4].parse().map_err(|_| bad("final_window_mean"))?,
            final_window_std: fields[5].parse().map_err(|_| bad("final_window_std"))?,
            steps_to_threshold: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| bad("steps_to_threshold"))?)
            },
        };
        if !fields[7].is_empty() {
            threshold = Some(fields[7].parse().map_err(|_| bad("threshold"))?);
        }
        match fields[1] {
            "seed" => per_seed.push(row),
            "aggregate" => agg = Some(row),
            other => return Err(bad(&format!("scope `{other}`"))),
        }
    }
    let aggregate = agg.ok_or_else(|| {
        HarnessError::runtime(format!("{}: missing aggregate row", path.display()))
    })?;
    Ok(SummaryFile {
        per_seed,
        aggregate,
        threshold,
    })
}
