//! `specalloy <experiment> --config <file> [--output-dir <dir>] [--seed <u64>] [--threads <n>]`
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use specalloy::experiment::{prepare_config, run_with_threads, validate, ExperimentKind, Severity};
use specalloy::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "specalloy", version, about = "Spectral experiments for 1D alloy-type random Schrödinger operators")]
struct Cli {
    /// One of: ids, mixture, bands, essential-spectrum, bracketing, lyapunov, decay, window-ids.
    experiment: String,

    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Overrides `output_dir` of the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Overrides `seed` of the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; all cores when unset.
    #[arg(long, env = "SPECALLOY_THREADS")]
    threads: Option<usize>,

    /// Print the diagnostics and exit without running.
    #[arg(long)]
    check: bool,
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("specalloy: {err}");
    if err.is_validation() {
        ExitCode::from(EXIT_VALIDATION)
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind: ExperimentKind = match cli.experiment.parse() {
        Ok(k) => k,
        Err(e) => return fail(&e),
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail(&Error::Config(format!("cannot read {}: {e}", cli.config.display()))),
    };
    let config = match prepare_config(&text, kind, cli.seed, cli.output_dir) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };

    let diagnostics = validate(&config);
    for d in &diagnostics {
        eprintln!("{d}");
    }
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return ExitCode::from(EXIT_VALIDATION);
    }
    if cli.check {
        return ExitCode::SUCCESS;
    }

    match run_with_threads(&config, cli.threads) {
        Ok(result) => {
            let summary = serde_json::to_string_pretty(&result.summary).unwrap_or_default();
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
