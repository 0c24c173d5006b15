//! Binary entry point: argument parsing and the exit-code contract.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtlab::commands::{cmd_metrics, cmd_scan, cmd_scenario, scenario_exit_code};
use rtlab::{audit::cmd_audit, tolerance_from_env, CliResult};

/// Verification laboratory for robustness/accuracy trade-offs of classical
/// and quantum classifiers.
#[derive(Parser)]
#[command(name = "rtlab", version, about)]
struct Cli {
    /// Zero the report timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    normalize: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the metric table for a JSON-configured task.
    Metrics {
        /// Run configuration (JSON; see the README for the schema).
        #[arg(long)]
        config: PathBuf,
        /// Report path (`.csv` for the flat table, JSON otherwise); stdout
        /// when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and run one verification scenario (ids 1..=12).
    Scenario {
        /// Scenario id.
        #[arg(long)]
        id: u32,
        /// Scenario parameter override, repeatable (`--param p=0.4`).
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Master seed for every stochastic part of the scenario.
        #[arg(long)]
        seed: u64,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit response lines across a channel-family parameter grid.
    Scan {
        /// Channel family: bit_flip, phase_flip, or depolarizing.
        #[arg(long)]
        noise: String,
        /// Inclusive parameter grid `start:end:step`.
        #[arg(long)]
        grid: String,
        /// Measurement configuration (JSON with an `effects` list).
        #[arg(long)]
        config: PathBuf,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-derive every checked relation on its canonical instance.
    Audit {
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<u8> {
    let tolerance = tolerance_from_env()?;
    match cli.command {
        Command::Metrics { config, out } => {
            cmd_metrics(&config, out.as_deref(), cli.normalize, tolerance)?;
            Ok(0)
        }
        Command::Scenario { id, params, seed, out } => {
            let all_passed =
                cmd_scenario(id, &params, seed, out.as_deref(), cli.normalize, tolerance)?;
            if !all_passed {
                eprintln!("scenario {id}: assertions failed (report written)");
            }
            Ok(scenario_exit_code(all_passed))
        }
        Command::Scan { noise, grid, config, out } => {
            cmd_scan(&noise, &grid, &config, out.as_deref())?;
            Ok(0)
        }
        Command::Audit { out } => {
            cmd_audit(out.as_deref(), cli.normalize, tolerance)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
