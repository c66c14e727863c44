use std::path::PathBuf;

use anyhow::Context;
use mpdelta_core::model_io::{extract_delta, restore, ModelCheckpoint};
use mpdelta_core::numerics::{fro_norm, Matrix};
use mpdelta_core::pipeline::{decompress_package, DeltaPackage};
use mpdelta_core::quant::{dequantize, sign_quantize};

use crate::util::{check_output, load_checkpoint};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    backbone: PathBuf,
    #[arg(long)]
    package: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Apply the package even if it was built against a different backbone.
    #[arg(long)]
    force: bool,
    /// Original aligned checkpoint; prints per-tensor delta error against it.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn rel(err: f64, norm: f64) -> f64 {
    if norm == 0.0 {
        err
    } else {
        err / norm
    }
}

fn report(backbone: &ModelCheckpoint, restored: &ModelCheckpoint, reference: &ModelCheckpoint) -> anyhow::Result<()> {
    let truth = extract_delta(reference, backbone)?;
    println!("{:<40} {:>12} {:>12}", "tensor", "rel error", "sign 1-bit");
    for (name, t) in &truth.tensors {
        let got = restored.tensors()[name].data.sub(&backbone.tensors()[name].data)?;
        let norm = fro_norm(&t.data);
        let ours = rel(fro_norm(&got.sub(&t.data)?), norm);
        let sign = if t.is_vector {
            "-".to_string()
        } else {
            let s: Matrix = dequantize(&sign_quantize(&t.data))?;
            format!("{:.4e}", rel(fro_norm(&s.sub(&t.data)?), norm))
        };
        println!("{name:<40} {ours:>12.4e} {sign:>12}");
    }
    Ok(())
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let mut inputs = vec![a.backbone.as_path(), a.package.as_path()];
    inputs.extend(a.reference.as_deref());
    check_output(&a.output, &inputs)?;

    let backbone = load_checkpoint(&a.backbone)?;
    let pkg = DeltaPackage::load(&a.package).with_context(|| format!("reading package {}", a.package.display()))?;
    let delta = decompress_package(&pkg)?;
    if a.force && delta.backbone_checksum != backbone.checksum() {
        eprintln!("warning: backbone checksum differs from the package's; applying anyway");
    }
    let restored = restore(&backbone, &delta, a.force)?;
    restored
        .save(&a.output)
        .with_context(|| format!("writing checkpoint {}", a.output.display()))?;
    if let Some(r) = &a.reference {
        report(&backbone, &restored, &load_checkpoint(r)?)?;
    }
    println!("restored {} tensors to {}", restored.len(), a.output.display());
    Ok(())
}
