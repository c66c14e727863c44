use std::path::PathBuf;

use mpdelta_core::bench::{run_bench, to_csv, BenchConfig, Impl};

use crate::util::{parse_alpha, parse_list, write_text};

/// Alias so clap takes the parsed list as one value rather than repeated flags.
type Sizes = Vec<usize>;

#[derive(clap::Args)]
pub struct Args {
    /// Comma-separated square sizes.
    #[arg(long, default_value = "1024,2048,4096", value_parser = parse_list)]
    hidden: Sizes,
    /// Comma-separated input batch sizes.
    #[arg(long, default_value = "1,4,16", value_parser = parse_list)]
    batches: Sizes,
    #[arg(long, default_value_t = 100)]
    applies: usize,
    #[arg(long, default_value = "8+3+2")]
    schedule: String,
    #[arg(long, default_value = "1/16", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 128)]
    group_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let cfg = BenchConfig {
        hidden: a.hidden,
        batches: a.batches,
        applies: a.applies,
        schedule: a.schedule,
        alpha: a.alpha,
        group_size: a.group_size,
        seed: a.seed,
    };
    let rows = run_bench(&cfg, |r| {
        if r.imp == Impl::Materialized {
            eprintln!(
                "hidden {:>5} batch {:>3}: speedup {:.2}x, rel err {:.1e}",
                r.hidden, r.batch, r.speedup, r.rel_err
            );
        }
    })?;
    write_text(a.output.as_ref(), &to_csv(&rows))
}
