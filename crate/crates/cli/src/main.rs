//! `mpdelta`: compress fine-tuned deltas against a shared backbone, restore
//! them, and inspect schedules, errors, searches and apply speed.

mod analyze;
mod bench;
mod compress;
mod plan;
mod restore;
mod search;
mod synth;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpdelta_core::alloc_track::TrackingAllocator;
use mpdelta_core::ErrorClass;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(
    name = "mpdelta",
    version,
    about = "Mixed-precision delta compression for fine-tuned models"
)]
struct Cli {
    /// Worker threads for per-tensor work (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress the delta between an aligned checkpoint and its backbone.
    Compress(compress::Args),
    /// Rebuild an aligned checkpoint from a backbone and a package.
    Restore(restore::Args),
    /// Print the rank schedule for a matrix shape.
    Plan(plan::Args),
    /// Compare compression methods by activation error and emit CSV.
    Analyze(analyze::Args),
    /// Genetic search over per-precision rank counts.
    Search(search::Args),
    /// Time fused against materialized apply.
    Bench(bench::Args),
    /// Write a synthetic backbone, aligned model and calibration set.
    Synth(synth::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mpdelta_core::Error>() {
            return match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Integrity => 3,
                ErrorClass::Numeric => 4,
                ErrorClass::Io => 1,
            };
        }
        if cause.downcast_ref::<util::UsageError>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(util::UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Compress(a) => compress::run(a),
        Command::Restore(a) => restore::run(a),
        Command::Plan(a) => plan::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Search(a) => search::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Synth(a) => synth::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
