//! Library surface of the masklab command-line tool: config schemas, the
//! provenance manifest, and the subcommand implementations, exposed so
//! integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::common::{CmdError, RunOptions};

/// Runs a subcommand by name and returns the process exit code.
pub fn execute(subcommand: &str, opts: &RunOptions) -> i32 {
    let outcome = match subcommand {
        "theory" => commands::theory::run(opts),
        "concentration" => commands::concentration::run(opts),
        "sweep" => commands::sweep::run(opts),
        "probe" => commands::probe::run(opts),
        other => {
            eprintln!("unknown subcommand: {other}");
            return 2;
        }
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("{subcommand}: one or more checks failed (see reports in the output directory)");
            1
        }
        Err(e) => {
            eprintln!("{subcommand}: {}", e.message());
            e.exit_code()
        }
    }
}
