use cbdrl_harness::compare::compare_runs;
use cbdrl_harness::config::ExperimentConfig;
use cbdrl_harness::error::{HarnessError, Result};
use cbdrl_harness::oracle::oracle_check;
use cbdrl_harness::runner::{run_experiment, run_sweep, GridAxis, RunOutcome, OUTPUT_ROOT_VAR};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cbdrl",
    version,
    about = "Run, sweep, compare, and verify desk-scale RL experiments",
    after_help = format!("Output directories live under ./runs unless {OUTPUT_ROOT_VAR} is set.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config and write its artifacts.
    Run {
        /// Config file: flat `key = value` text or its JSON mirror.
        config: PathBuf,
        /// Replace the output directory if it already exists.
        #[arg(long)]
        force: bool,
    },
    /// Compare two finished runs on the same environment.
    Compare {
        /// Baseline run directory.
        baseline: PathBuf,
        /// Candidate run directory.
        candidate: PathBuf,
    },
    /// Check a tabular run's checkpoints against the exact solution.
    OracleCheck {
        /// Run directory with checkpoints.
        dir: PathBuf,
        /// Final sup-norm gap the last checkpoint must reach.
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
    },
    /// Run the cartesian product of grid overrides on a base config.
    Sweep {
        /// Base config file.
        config: PathBuf,
        /// Axis as key=v1,v2,...; repeat the flag for more axes.
        #[arg(long, required = true)]
        grid: Vec<String>,
        /// Replace the sweep directory if it already exists.
        #[arg(long)]
        force: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

/// Prints one line to stdout, exiting quietly if the reader has gone away
/// (`cbdrl ... | head` must not panic mid-report).
fn emit(line: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").is_err() {
        std::process::exit(0);
    }
}

macro_rules! emit {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, force } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let outcome = run_experiment(&cfg, force)?;
            print_outcome(&outcome);
            Ok(())
        }
        Command::Compare {
            baseline,
            candidate,
        } => {
            let report = compare_runs(&baseline, &candidate)?;
            emit!("{}", pretty(&report)?);
            Ok(())
        }
        Command::OracleCheck { dir, tol } => {
            let report = oracle_check(&dir, tol)?;
            emit!("{}", pretty(&report)?);
            Ok(())
        }
        Command::Sweep {
            config,
            grid,
            force,
        } => {
            let axes = grid
                .iter()
                .map(|axis| GridAxis::parse(axis))
                .collect::<Result<Vec<_>>>()?;
            let sweep = run_sweep(&config, &axes, force)?;
            emit!("sweep written to {}", sweep.dir.display());
            for (label, outcome) in &sweep.runs {
                emit!(
                    "  {label}: final mean {:.4} ± {:.4}{}",
                    outcome.aggregate.final_window_mean,
                    outcome.aggregate.final_window_std,
                    fmt_steps(outcome.aggregate.steps_to_threshold)
                );
            }
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::runtime(format!("encoding report: {e}")))
}

fn fmt_steps(steps: Option<u64>) -> String {
    match steps {
        Some(s) => format!(", steps-to-threshold {s}"),
        None => String::new(),
    }
}

fn print_outcome(outcome: &RunOutcome) {
    emit!("run written to {}", outcome.dir.display());
    for seed in &outcome.seeds {
        emit!(
            "  seed {}: {} episodes, final mean {:.4} ± {:.4}{}",
            seed.seed,
            seed.summary.episodes,
            seed.summary.final_window_mean,
            seed.summary.final_window_std,
            fmt_steps(seed.summary.steps_to_threshold)
        );
    }
    emit!(
        "  aggregate: final mean {:.4} ± {:.4}{}{}",
        outcome.aggregate.final_window_mean,
        outcome.aggregate.final_window_std,
        fmt_steps(outcome.aggregate.steps_to_threshold),
        match outcome.threshold {
            Some(t) => format!(" (threshold {t})"),
            None => String::new(),
        }
    );
}
