//! Config-driven batch front end for the identifiability protocols.
//!
//! `abmident run --config cfg.json [--set key=value]... [--threads N]
//! [--output DIR]` executes exactly one protocol and writes its artifacts
//! plus a provenance manifest; `abmident report DIR` summarizes a finished
//! run without recomputing anything.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error,
//! 4 capability error.

mod config;
mod report;
mod run;

use abmident_core::error::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "abmident",
    version,
    about = "structural identifiability diagnostics for agent-based models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the protocol described by a JSON config file.
    Run {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override a config value by dotted path, e.g. --set sim.master_seed=7.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker pool size; falls back to ABMIDENT_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize the artifacts of a finished run.
    Report { output_dir: PathBuf },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Bounds { .. } | Error::Config(_) | Error::Shape { .. } | Error::Stationarity(_) => 2,
        Error::Parse(msg) => {
            if msg.starts_with("config") {
                2
            } else {
                3
            }
        }
        Error::Numerical { .. }
        | Error::MultipleStationary { .. }
        | Error::SingularDiffusion { .. }
        | Error::Io(_) => 3,
        Error::Capability { .. } => 4,
        Error::Replicate { source, .. } => exit_code_for(source),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Error> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ABMIDENT_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| Error::config(format!("ABMIDENT_THREADS: invalid value `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("threads: must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("threads: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            set,
            threads,
            output,
        } => (|| {
            configure_threads(threads)?;
            let text = std::fs::read_to_string(&config).map_err(|e| {
                Error::config(format!("config: cannot read {}: {e}", config.display()))
            })?;
            let (run_config, resolved) = config::load_config(&text, &set)?;
            let outcome = run::execute(&run_config, &resolved, output)?;
            println!(
                "wrote {} file(s) to {}",
                outcome.files.len(),
                outcome.output_dir.display()
            );
            Ok(())
        })(),
        Command::Report { output_dir } => report::report(&output_dir).map(|text| {
            print!("{text}");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
