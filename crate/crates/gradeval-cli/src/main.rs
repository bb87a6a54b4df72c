use clap::Parser;
use gradeval_cli::commands::{run, write_report};
use gradeval_cli::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Desk-scale estimation experiments: simultaneous expectation values via
/// the gradient read-out, correlation functions, cost tables, and a
/// benchmark against naive sampling.
#[derive(Debug, Parser)]
#[command(name = "gradeval", version, about)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the oracle mode: analytic | circuit.
    #[arg(long)]
    mode: Option<String>,
    /// Override the trial count (benchmark task).
    #[arg(long)]
    trials: Option<u64>,
    /// Write the report here instead of the config's `out` (defaults to
    /// stdout when neither is set).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the qubit budget.
    #[arg(long)]
    max_qubits: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(max_qubits) = args.max_qubits {
        config.max_qubits = max_qubits;
    }
    if let Some(out) = args.out {
        config.out = Some(out.display().to_string());
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    match run(&config) {
        Ok(outcome) => {
            match write_report(&outcome.envelope, config.out.as_deref()) {
                Ok(text) => {
                    if config.out.is_none() {
                        println!("{text}");
                    } else {
                        println!(
                            "task {:?}: success = {}, report written to {}",
                            config.task,
                            outcome.envelope.success,
                            config.out.as_deref().unwrap_or("-")
                        );
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
