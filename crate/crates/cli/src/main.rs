use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iagflow_cli::{default_workers, execute, output_dir, ExperimentKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "iagflow",
    version,
    about = "Numerical checks of Alekseev-Gröbner type error identities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides IAGFLOW_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic identity: both sides and the residual per outer level.
    AgVerify(RunArgs),
    /// Monte-Carlo means of every term of the stochastic identity.
    IagWeak(RunArgs),
    /// Per-path residual norms under outer-grid refinement.
    IagPathwise(RunArgs),
    /// Duality of the residual with functionals of W_T.
    IagDuality(RunArgs),
    /// Strong convergence rate of the tamed scheme.
    VdpRate(RunArgs),
    /// Closed form of E exp(c (a + bX)^2) against Monte Carlo.
    MgfCheck(RunArgs),
    /// Exponential moments of the tamed scheme against their bound.
    ExpmomentCheck(RunArgs),
    /// Moments of the first and second flow derivatives.
    FlowmomentCheck(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::AgVerify(a) => (ExperimentKind::AgVerify, a),
            Command::IagWeak(a) => (ExperimentKind::IagWeak, a),
            Command::IagPathwise(a) => (ExperimentKind::IagPathwise, a),
            Command::IagDuality(a) => (ExperimentKind::IagDuality, a),
            Command::VdpRate(a) => (ExperimentKind::VdpRate, a),
            Command::MgfCheck(a) => (ExperimentKind::MgfCheck, a),
            Command::ExpmomentCheck(a) => (ExperimentKind::ExpmomentCheck, a),
            Command::FlowmomentCheck(a) => (ExperimentKind::FlowmomentCheck, a),
        }
    }
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let workers = args.workers.or(config.workers).unwrap_or_else(default_workers);
    let out = output_dir(kind, &config, args.out.as_deref());
    match execute(kind, &config, &out, workers) {
        Ok(summary) => {
            for check in &summary.outcome.checks {
                println!(
                    "{} {}: {:.6e} ({})",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.observed,
                    check.criterion
                );
            }
            println!("wrote {}", summary.output_dir.display());
            ExitCode::from(summary.exit_code)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
