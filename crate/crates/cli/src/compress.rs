use std::path::PathBuf;

use anyhow::Context;
use mpdelta_core::model_io::extract_delta;
use mpdelta_core::pipeline::{compress_model, CompressOptions, PackageEntry};

use crate::util::{check_output, load_calibration, load_checkpoint, parse_alpha, usage};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    backbone: PathBuf,
    /// Fine-tuned checkpoint aligned with the backbone.
    #[arg(long)]
    aligned: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "8+3+2")]
    schedule: String,
    #[arg(long, default_value = "1/16", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    group_size: usize,
    /// Glob over tensor names to keep uncompressed (repeatable).
    #[arg(long)]
    exclude: Vec<String>,
    /// Checkpoint of calibration inputs, one `h_in × samples` matrix per weight.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Draw Gaussian calibration inputs (from --seed) where none are supplied.
    #[arg(long)]
    synthetic_calibration: bool,
    /// Columns of each synthetic calibration matrix.
    #[arg(long, default_value_t = 512)]
    calibration_samples: usize,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    if a.group_size == 0 || a.calibration_samples == 0 {
        return Err(usage("--group-size and --calibration-samples must be positive"));
    }
    let mut inputs = vec![a.backbone.as_path(), a.aligned.as_path()];
    inputs.extend(a.calibration.as_deref());
    check_output(&a.output, &inputs)?;

    let backbone = load_checkpoint(&a.backbone)?;
    let aligned = load_checkpoint(&a.aligned)?;
    let calibration = load_calibration(a.calibration.as_deref())?;
    let delta = extract_delta(&aligned, &backbone)?;
    let opts = CompressOptions {
        group_size: a.group_size,
        synthetic_calibration: a.synthetic_calibration.then_some(a.seed),
        calibration_samples: a.calibration_samples,
        exclude: a.exclude,
        ..CompressOptions::default()
    };
    let pkg = compress_model(&delta, &calibration, &a.schedule, a.alpha, &opts)?;
    pkg.save(&a.output)
        .with_context(|| format!("writing package {}", a.output.display()))?;

    println!(
        "{:<40} {:>11} {:>12} {:>8}  schedule",
        "tensor", "shape", "code bits", "avg bits"
    );
    for (name, entry) in &pkg.entries {
        match entry {
            PackageEntry::Matrix(cm) => {
                let n = (cm.h_out() * cm.h_in()) as f64;
                println!(
                    "{:<40} {:>11} {:>12} {:>8.4}  {}",
                    name,
                    format!("{}x{}", cm.h_out(), cm.h_in()),
                    cm.code_bits(),
                    cm.code_bits() as f64 / n,
                    cm.schedule()
                );
            }
            PackageEntry::Raw(t) => {
                let (r, c) = t.shape();
                println!(
                    "{:<40} {:>11} {:>12} {:>8}  raw f16",
                    name,
                    format!("{r}x{c}"),
                    16 * r * c,
                    16
                );
            }
        }
    }
    let st = pkg.stats();
    let avg = if st.compressed_params > 0 {
        st.code_bits as f64 / st.compressed_params as f64
    } else {
        0.0
    };
    println!("avg bitwidth {avg:.4} (limit {:.4})", 16.0 * a.alpha);
    println!(
        "payload {} of {} budget bits, metadata overhead {:.2}%",
        st.code_bits,
        st.budget_bits,
        100.0 * st.overhead_fraction()
    );
    println!("raw tensors {} bits; wrote {}", st.raw_bits, a.output.display());
    Ok(())
}
