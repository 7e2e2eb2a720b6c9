//! `eqbm`: train and verify evolved quantum Boltzmann machines from a JSON
//! experiment config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Context};

#[derive(Parser)]
#[command(name = "eqbm", version, about = "Minimax training of evolved quantum Boltzmann machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "eqbm-out")]
    out: PathBuf,
    /// Worker threads for shot sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured optimizer; writes trace.csv, summary.json and config.resolved.json.
    Train,
    /// Compare every gradient and Hessian block with finite differences at random points.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Check the shot estimators against exact values (built-in one-qubit instance without --config).
    Calibrate {
        #[arg(long, default_value_t = 400)]
        repetitions: usize,
    },
    /// Sweep the one-qubit closed-form relative entropy and certify nonconvexity.
    Nonconvexity {
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        mu_min: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        mu_max: f64,
    },
    /// Solve the inner problem with a tabular critic and compare with the relative entropy.
    DvExactness,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation(vec!["--threads must be positive".into()]));
        }
        eqbm::exec::set_global_threads(n).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let load = |required| Context::load(cli.config.as_deref(), cli.seed, cli.out.clone(), required);
    match cli.command {
        Command::Train => commands::train(&load(true)?.expect("required")),
        Command::GradCheck { trials } => commands::grad_check(&load(true)?.expect("required"), trials),
        Command::Calibrate { repetitions } => {
            if repetitions < 2 {
                return Err(CliError::Validation(vec!["--repetitions must be at least 2".into()]));
            }
            commands::calibrate(load(false)?.as_ref(), cli.seed, &cli.out, repetitions)
        }
        Command::Nonconvexity { points, mu_min, mu_max } => commands::nonconvexity(&cli.out, points, mu_min, mu_max),
        Command::DvExactness => commands::dv_exactness(&load(true)?.expect("required")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
