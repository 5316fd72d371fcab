use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use pmlkit_cli::commands::{self, BudgetKind, PolicyKind, SEED_ENV};
use pmlkit_cli::report::{render, CliError, EXIT_SCHEMA};
use pmlkit_cli::Config;

const AFTER_HELP: &str = "\
Seeds: --seed, else sim.seed in the config, else the PMLKIT_SEED environment
variable, else 0.

Exit codes: 0 ok, 2 schema error, 3 numerical error, 4 infeasible budget,
5 unstable system.";

/// Pointwise maximal leakage analysis and privacy-noise design.
#[derive(Debug, Parser)]
#[command(name = "pmlkit", version, about, after_help = AFTER_HELP)]
struct Cli {
    /// JSON config file; standard input when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Random seed (overrides sim.seed and PMLKIT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Leakage of an observation, exact privacy probability and the PML test.
    PmlEval {
        /// Observation y as comma-separated numbers (overrides `y` in the config).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
    },
    /// Design the noise covariance Θ for a budget and verify it.
    Design {
        #[arg(long, value_enum, default_value = "boundary")]
        policy: PolicyKind,
        /// Identity jitter added to the designed Θ.
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Convert a budget between PML, DP and MI.
    Convert {
        #[arg(long, value_enum)]
        from: BudgetKind,
        #[arg(long, value_enum)]
        to: BudgetKind,
    },
    /// Steady-state Kalman covariance and error lower bounds.
    Kalman {
        /// Write a simulated trajectory (k,x,y,xhat,p) to this CSV file.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Per-subsystem noise design and accuracy metric for a fusion network.
    Aggregate {
        /// Directory for aggregate.csv (needs a sim section).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the privacy guarantee and of the χ² law.
    Verify {
        /// Number of Monte Carlo samples (overrides sim.samples).
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn read_config(path: Option<&PathBuf>) -> Result<Config, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError { code: EXIT_SCHEMA, message: format!("{}: {e}", p.display()) })?,
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError { code: EXIT_SCHEMA, message: format!("stdin: {e}") })?;
            s
        }
    };
    Config::parse(&text)
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = read_config(cli.config.as_ref())?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let seed = || commands::resolve_seed(cli.seed, &cfg, env_seed.as_deref());
    let report = match cli.command {
        Command::PmlEval { y } => commands::pml_eval(&cfg, y.map(DVector::from_vec))?,
        Command::Design { policy, jitter } => commands::design(&cfg, policy, jitter)?,
        Command::Convert { from, to } => commands::convert(&cfg, from, to)?,
        Command::Kalman { csv } => commands::kalman(&cfg, seed()?, csv.as_deref())?,
        Command::Aggregate { out } => commands::aggregate(&cfg, seed()?, out.as_deref())?,
        Command::Verify { samples } => commands::verify(&cfg, seed()?, samples)?,
    };
    Ok(render(&report))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
