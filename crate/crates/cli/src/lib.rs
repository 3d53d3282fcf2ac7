//! Experiment runner: reads a TOML configuration, runs one experiment on a
//! bounded worker pool and writes `report.json` and `results.csv`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentKind, RunConfig};
pub use error::CliError;
pub use experiments::Outcome;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "IAGFLOW_OUT";

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// `--out`, then `IAGFLOW_OUT`, then `output_dir` from the config, then
/// `out/<experiment>`.
pub fn output_dir(kind: ExperimentKind, config: &RunConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_code: u8,
    pub outcome: Outcome,
    pub output_dir: PathBuf,
}

/// Runs `kind` with `config` on `workers` threads and writes both output
/// files. Errors before any output is written are returned as `Err`.
pub fn execute(kind: ExperimentKind, config: &RunConfig, out: &Path, workers: usize) -> Result<RunSummary, CliError> {
    if workers == 0 {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| experiments::run(kind, config))?;
    let elapsed = start.elapsed().as_secs_f64();

    let too_many_diverged = outcome
        .samples
        .is_some_and(|m| outcome.diverged as f64 > config.max_diverged_fraction * m as f64);
    let exit_code = if too_many_diverged {
        EXIT_DIVERGED
    } else if outcome.pass() {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    };
    let report = output::Report {
        experiment: kind.name(),
        config,
        run: output::RunMetadata::collect(config.seed, workers, elapsed),
        samples: outcome.samples,
        diverged: outcome.diverged,
        max_diverged_fraction: config.max_diverged_fraction,
        results: outcome.results.clone(),
        checks: &outcome.checks,
        pass: exit_code == EXIT_PASS,
        exit_code,
    };
    output::write_outputs(out, &report, &outcome.table)?;
    Ok(RunSummary {
        exit_code,
        outcome,
        output_dir: out.to_path_buf(),
    })
}
