mod commands;
mod error;
mod input;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CheckArgs, ConvexifyArgs, ExperimentArgs, SensitivityArgs, VerifyArgs};

/// Directional sensitivities of equality-constrained dynamic programs.
///
/// Exit codes: 0 success, 1 validation or assumption failure, 2 solver
/// failure, 3 I/O or parse failure.
#[derive(Debug, Parser)]
#[command(name = "dpsens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check second-order sufficiency, boundedness and controllability.
    Check(CheckArgs),
    /// Convexify by linear shifting and write the transformed problem as JSON.
    Convexify(ConvexifyArgs),
    /// Solve for the sensitivity to one unit perturbation and write its decay CSV.
    Sensitivity(SensitivityArgs),
    /// Perturb the tracking problem by several step sizes and write log-ratio CSVs.
    Experiment(ExperimentArgs),
    /// Compare the pipeline against the dense and finite-difference oracles.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Convexify(a) => commands::convexify_cmd(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
