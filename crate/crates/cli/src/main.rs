use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wentzell_cli::{parse_config, run_with_threads, threads_from_env, Command};

/// Discretize, simulate and check the strongly damped wave equation with
/// dynamic Wentzell boundary conditions.
#[derive(Parser, Debug)]
#[command(name = "wentzell", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let summary = match threads_from_env().and_then(|t| run_with_threads(&config, cli.command, &out, t)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for c in &summary.checks {
        println!("{:<22} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    for note in &summary.notes {
        println!("note: {note}");
    }
    println!("artifacts in {}", out.display());
    if summary.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
