use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use indexmap::IndexMap;
use mpdelta_core::model_io::ModelCheckpoint;
use mpdelta_core::numerics::Matrix;

/// Bad flag combination or value that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `1/16`, `0.0625` and the like; must lie in (0, 1].
pub fn parse_alpha(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            n / d
        }
        None => s
            .trim()
            .parse()
            .map_err(|_| format!("'{s}' is not a number or fraction"))?,
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("alpha {s} must lie in (0, 1]"))
    }
}

/// Comma-separated positive integers.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("'{p}' is not a positive integer")),
            Ok(v) => Ok(v),
        })
        .collect()
}

pub fn load_checkpoint(path: &Path) -> anyhow::Result<ModelCheckpoint> {
    ModelCheckpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

/// Calibration inputs stored as a checkpoint: one `h_in × samples` matrix per weight name.
pub fn load_calibration(path: Option<&Path>) -> anyhow::Result<IndexMap<String, Matrix>> {
    let Some(path) = path else { return Ok(IndexMap::new()) };
    let ckpt = load_checkpoint(path)?;
    Ok(ckpt
        .tensors()
        .iter()
        .map(|(k, t)| (k.clone(), t.data.clone()))
        .collect())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Refuses to write over any of the inputs.
pub fn check_output(output: &Path, inputs: &[&Path]) -> anyhow::Result<()> {
    if let Some(p) = inputs.iter().find(|p| same_file(output, p)) {
        return Err(usage(format!(
            "output {} would overwrite input {}",
            output.display(),
            p.display()
        )));
    }
    Ok(())
}

pub fn write_text(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Layer index: the first purely numeric dot-separated component of a name.
pub fn layer_index(name: &str) -> Option<usize> {
    name.split('.').find_map(|p| p.parse().ok())
}

/// Parameter kind: the last dot-separated component, minus a `weight` suffix.
pub fn param_kind(name: &str) -> &str {
    let mut parts = name.rsplit('.');
    let last = parts.next().unwrap_or(name);
    if last == "weight" {
        parts.next().unwrap_or(last)
    } else {
        last
    }
}
