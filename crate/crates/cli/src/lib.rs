//! The `nlx` batch front end: configs in, CSV / JSON reports out.
//!
//! Exit codes: 0 when the run succeeds and no verdict fails, 2 when a
//! verdict fails, 1 on any error.

pub mod config;
pub mod report;
pub mod run;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use config::{parse_config, ExperimentConfig};
pub use report::{Report, Verdict};
pub use run::run_experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] nlx_core::Error),
}

/// `NLX_THREADS` caps the worker threads; 0 runs everything on one thread.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("NLX_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        CliError::Config(format!(
            "NLX_THREADS: expected a non-negative integer, got {value:?}"
        ))
    })?;
    // A second call in the same process finds the pool already built; that is fine.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global();
    Ok(())
}

/// Parses, runs and emits; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match config::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    let outcome = configure_threads()
        .and_then(|_| config::from_cli(cli))
        .and_then(|cfg| {
            let report = run_experiment(&cfg)?;
            report::emit(&report.render(cfg.format)?, cfg.output.as_deref())?;
            Ok(report.verdict)
        });
    match outcome {
        Ok(Verdict::Fail) => 2,
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
