use std::path::PathBuf;

use anyhow::Context;
use mpdelta_core::analyzer::{
    compare_methods_with, layer_bin_label, CompareOptions, ErrorReport, Method, MethodResult, SyntheticCase,
};
use mpdelta_core::model_io::extract_delta;
use mpdelta_core::numerics::{gaussian_matrix, Rng};
use mpdelta_core::Error;

use crate::util::{layer_index, load_calibration, load_checkpoint, param_kind, parse_alpha, usage, write_text};

#[derive(clap::Args)]
pub struct Args {
    /// Use the built-in long-tail synthetic deltas instead of checkpoints.
    #[arg(long)]
    synthetic: bool,
    /// Number of consecutive seeds to run in synthetic mode.
    #[arg(long, default_value_t = 1)]
    sweep: u64,
    /// Square size of synthetic deltas.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    synthetic_calibration: bool,
    #[arg(long, default_value_t = 512)]
    calibration_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "1/16", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 128)]
    group_size: usize,
    /// Fraction of input columns, by L1 norm, treated as outliers.
    #[arg(long, default_value_t = 0.01)]
    outlier_fraction: f64,
    /// Print an aligned table (errors x1e-2) instead of CSV.
    #[arg(long)]
    table: bool,
    /// CSV destination (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn mse(results: &[MethodResult], m: Method) -> f64 {
    results.iter().find(|r| r.method == m).map_or(f64::NAN, |r| r.mse_all)
}

#[derive(Default)]
struct Ordering {
    cases: usize,
    best: usize,
    vs_sign: usize,
    vs_low_rank: usize,
    vs_single: usize,
}

impl Ordering {
    fn add(&mut self, r: &[MethodResult]) {
        let t = mse(r, Method::Triple);
        self.cases += 1;
        self.best += usize::from(r.iter().all(|x| t <= x.mse_all));
        self.vs_sign += usize::from(t < mse(r, Method::Sign1Bit));
        self.vs_low_rank += usize::from(t < mse(r, Method::LowRank16));
        self.vs_single += usize::from(t <= mse(r, Method::Single3));
    }

    fn summary(&self) -> String {
        let n = self.cases;
        format!(
            "triple best on {}/{n}; triple < sign-1bit {}/{n}; triple < low-rank-16 {}/{n}; triple <= single-3 {}/{n}",
            self.best, self.vs_sign, self.vs_low_rank, self.vs_single
        )
    }
}

fn synthetic(a: &Args, opts: &CompareOptions, report: &mut ErrorReport, ord: &mut Ordering) -> anyhow::Result<()> {
    for seed in a.seed..a.seed + a.sweep {
        let case = SyntheticCase::suite(seed, a.hidden)?;
        let res = compare_methods_with(&case.delta, &case.x, a.alpha, opts)?;
        report.extend_results(&res, "synthetic", &format!("seed{seed}"))?;
        ord.add(&res);
    }
    Ok(())
}

fn checkpoints(a: &Args, opts: &CompareOptions, report: &mut ErrorReport, ord: &mut Ordering) -> anyhow::Result<()> {
    let (Some(b), Some(al)) = (&a.backbone, &a.aligned) else {
        return Err(usage("analyze needs --synthetic or both --backbone and --aligned"));
    };
    let delta = extract_delta(&load_checkpoint(al)?, &load_checkpoint(b)?)?;
    let calibration = load_calibration(a.calibration.as_deref())?;
    let n_layers = delta
        .tensors
        .keys()
        .filter_map(|n| layer_index(n))
        .max()
        .map_or(0, |m| m + 1);
    for (name, t) in delta.tensors.iter().filter(|(_, t)| !t.is_vector) {
        let x = match calibration.get(name) {
            Some(x) => x.clone(),
            None if a.synthetic_calibration => gaussian_matrix(
                &mut Rng::for_stream(a.seed, &format!("calibration/{name}")),
                t.data.cols(),
                a.calibration_samples,
            ),
            None => return Err(Error::MissingCalibration(name.clone()).into()),
        };
        // fewer than three layers cannot be split into low/medium/high
        let bin = match layer_index(name) {
            Some(_) if n_layers < 3 => "all",
            Some(i) => layer_bin_label(n_layers, i)?,
            None => "none",
        };
        let res = compare_methods_with(&t.data, &x, a.alpha, opts).with_context(|| format!("analyzing {name}"))?;
        report.extend_results(&res, param_kind(name), bin)?;
        ord.add(&res);
    }
    Ok(())
}

pub fn run(a: Args) -> anyhow::Result<()> {
    if a.sweep == 0 || a.hidden == 0 || a.group_size == 0 || a.calibration_samples == 0 {
        return Err(usage(
            "--sweep, --hidden, --group-size and --calibration-samples must be positive",
        ));
    }
    let opts = CompareOptions {
        group_size: a.group_size,
        outlier_fraction: a.outlier_fraction,
        ..CompareOptions::default()
    };
    let mut report = ErrorReport::new();
    let mut ord = Ordering::default();
    if a.synthetic {
        synthetic(&a, &opts, &mut report, &mut ord)?;
    } else {
        checkpoints(&a, &opts, &mut report, &mut ord)?;
    }
    let text = if a.table { report.to_table() } else { report.to_csv() };
    write_text(a.output.as_ref(), &text)?;
    if ord.cases > 1 {
        // keep CSV on stdout clean
        if a.output.is_some() || a.table {
            println!("{}", ord.summary());
        } else {
            eprintln!("{}", ord.summary());
        }
    }
    Ok(())
}
