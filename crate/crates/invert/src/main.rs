//! invert: batch experiment runner for the uki-core inversion library.
//!
//! Exit codes: 0 success, 1 run or I/O failure, 2 configuration error,
//! 3 divergence detected (partial history written).

mod compare;
mod config;
mod run;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::{apply_overrides, resolve, RunConfig};

const EXIT_RUN_ERROR: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "invert", about = "Derivative-free Bayesian inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one inversion experiment from a JSON config.
    Run {
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-key overrides, e.g. --set problem.sigma_eta=1e-4.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory (overrides output_dir in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override for observation noise and oracles.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tabulate two or more summary.json files of the same problem.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
    },
    /// List the available problem ids and their dimensions.
    ListProblems,
}

fn run_command(
    config_path: &PathBuf,
    overrides: &[String],
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> ExitCode {
    let text = match std::fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let raw: serde_json::Value = match serde_json::from_str(&text) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("error: config does not parse: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let raw = match apply_overrides(raw, overrides) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let mut config: RunConfig = match serde_json::from_value(raw) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = &out {
        config.output_dir = Some(out.display().to_string());
    }
    let out_dir = match &config.output_dir {
        Some(dir) => PathBuf::from(dir),
        None => {
            eprintln!("error: config key 'output_dir': missing (or pass --out)");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let resolved = match resolve(&config) {
        Ok(resolved) => resolved,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    match run::execute(&config, &resolved, &out_dir) {
        Ok(outcome) if outcome.diverged => {
            eprintln!("divergence detected; partial history written to {}", out_dir.display());
            ExitCode::from(EXIT_DIVERGED)
        }
        Ok(_) => {
            println!("wrote {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN_ERROR)
        }
    }
}

fn list_problems() {
    println!("id           theta dim  obs dim  notes");
    println!("exponential  1          1        exp(theta/10), theta_ref 2");
    println!("quadratic    1          1        theta^2, bimodal posterior");
    println!("cubic        1          1        theta^3");
    println!("sign-cubic   1          1        sign(theta) + theta^3");
    println!("hyperbola    1          1        1/theta, undefined at 0");
    println!("elliptic2    2          2        closed-form elliptic BVP, y default (27.5, 79.7)");
    println!("darcy        32         63       1D Darcy flow, KL log-permeability, committed fixtures");
    println!("linear       n          m        arbitrary G matrix supplied in the config");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            overrides,
            out,
            seed,
        } => run_command(&config, &overrides, out, seed),
        Command::Compare { summaries } => match compare::compare(&summaries) {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_RUN_ERROR)
            }
        },
        Command::ListProblems => {
            list_problems();
            ExitCode::SUCCESS
        }
    }
}
