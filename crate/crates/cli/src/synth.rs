use std::path::PathBuf;

use anyhow::Context;
use mpdelta_core::analyzer::synth_longtail_delta;
use mpdelta_core::model_io::{ModelCheckpoint, Tensor};
use mpdelta_core::numerics::{gaussian_matrix, Rng};

use crate::util::usage;

#[derive(clap::Args)]
pub struct Args {
    /// Directory receiving backbone.dckp, aligned.dckp and calibration.dckp.
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Columns of each calibration matrix.
    #[arg(long, default_value_t = 128)]
    samples: usize,
    /// Scale of the fine-tuning delta relative to unit-variance weights.
    #[arg(long, default_value_t = 0.01)]
    delta_scale: f32,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    if a.layers == 0 || a.hidden == 0 || a.samples == 0 {
        return Err(usage("--layers, --hidden and --samples must be positive"));
    }
    let h = a.hidden;
    let mut rng = Rng::new(a.seed);
    let mut drift = Rng::for_stream(a.seed, "finetune");
    let mut calib = Rng::for_stream(a.seed, "calibration");
    let (mut base, mut tuned, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    for l in 0..a.layers {
        for (kind, rows, cols) in [
            ("attn.q", h, h),
            ("attn.o", h, h),
            ("mlp.up", 2 * h, h),
            ("mlp.down", h, 2 * h),
        ] {
            let name = format!("layers.{l}.{kind}");
            let w = gaussian_matrix(&mut rng, rows, cols);
            let d = synth_longtail_delta(&mut drift, rows, cols, 1.0, 0.01)?.scale(a.delta_scale)?;
            tuned.push((name.clone(), Tensor::matrix(w.add(&d)?)));
            base.push((name.clone(), Tensor::matrix(w)));
            xs.push((name, Tensor::matrix(gaussian_matrix(&mut calib, cols, a.samples))));
        }
        let name = format!("layers.{l}.norm");
        let norm: Vec<f32> = (0..h).map(|_| 1.0 + 0.1 * rng.normal() as f32).collect();
        let shifted: Vec<f32> = norm.iter().map(|v| v + a.delta_scale * drift.normal() as f32).collect();
        base.push((name.clone(), Tensor::vector(norm)?));
        tuned.push((name, Tensor::vector(shifted)?));
    }
    std::fs::create_dir_all(&a.output_dir).with_context(|| format!("creating {}", a.output_dir.display()))?;
    for (file, tensors) in [
        ("backbone.dckp", base),
        ("aligned.dckp", tuned),
        ("calibration.dckp", xs),
    ] {
        let path = a.output_dir.join(file);
        ModelCheckpoint::from_tensors(tensors)?
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
