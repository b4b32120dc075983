use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use masklab_cli::{execute, RunOptions};

/// Masked-optimization laboratory: random-mask fine-tuning experiments,
/// gradient-descent stability checks, and eigenvalue concentration suites.
#[derive(Parser)]
#[command(name = "masklab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for reports and CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Include wall-clock timings and a timestamp in the outputs. Off by
    /// default so repeated runs are byte-identical.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form trajectory, stability dichotomy, and norm-bound checks.
    Theory(CommonArgs),
    /// Eigenvalue deviation suite, trace identity, and tail envelope.
    Concentration(CommonArgs),
    /// Learning-rate x ratio x seed grid search with trend report.
    Sweep(CommonArgs),
    /// Hessian, distance, and longer-training probes.
    Probe(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Theory(a) => ("theory", a),
        Command::Concentration(a) => ("concentration", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Probe(a) => ("probe", a),
    };
    if let Some(workers) = args.workers {
        // Ignore the error if a pool already exists; results do not depend
        // on the worker count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let opts = RunOptions {
        config_path: args.config.clone(),
        seed_override: args.seed,
        out_dir: args.out.clone(),
        timings: args.timings,
    };
    ExitCode::from(execute(name, &opts) as u8)
}
