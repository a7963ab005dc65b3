mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::Outputs;
use paratrend::Error;

/// Invalid command-line configuration detected after parsing.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.root() {
                Error::Io(_)
                | Error::Parse(_)
                | Error::InvalidPanel(_)
                | Error::NonPositiveUnderLog { .. }
                | Error::AggregationMismatch { .. } => EXIT_IO,
                Error::InvalidParameter(_) | Error::InvalidBandwidth { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERIC,
            };
        }
    }
    1
}

fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            anyhow::bail!(ConfigError("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let out = Outputs::new(&cli.output_dir);
    match &cli.command {
        Command::Test(a) => commands::test(a, &out),
        Command::Cluster(a) => commands::cluster(a, &out),
        Command::Simulate(a) => commands::simulate(a, &out),
        Command::Longrun(a) => commands::longrun(a, &out),
        Command::Bandwidth(a) => commands::bandwidth(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
