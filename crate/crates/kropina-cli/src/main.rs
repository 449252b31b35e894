//! Batch command-line front end: builds catalog metrics from a JSON
//! config, runs checks, integrates geodesics, and emits deterministic
//! JSON/CSV artifacts.
//!
//! Exit codes: 0 success, 1 check failure, 2 config error, 3 sampling
//! failure.

mod commands;
mod config;
mod jsonfmt;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::CliError;
use config::{CommandKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "kropina", version, about = "Conic Kropina geometry toolbox")]
struct Cli {
    /// One of: check-cc, geodesic, convert, moduli, hamel, indicatrix.
    command: String,
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the report output path from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the sampling seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let requested = CommandKind::parse_name(&cli.command)
        .ok_or_else(|| CliError::Config(format!("unknown command `{}`", cli.command)))?;
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {:?}: {e}", cli.config)))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    if config.command != requested {
        return Err(CliError::Config(format!(
            "config is for another command (cli: {:?}, config: {:?})",
            requested, config.command
        )));
    }
    if let Some(out) = &cli.out {
        config.output.report = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        config.sampling.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load(&cli).and_then(|config| commands::run(&config));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
