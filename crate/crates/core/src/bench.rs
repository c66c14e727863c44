//! Fused versus materialize-then-multiply timing on synthetic packages.

use std::time::Instant;

use crate::alloc_track;
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, matmul, Matrix, Rng, SvdResult};
use crate::pipeline::{compress_factors, decompress_matrix, fused_apply, fused_apply_batch, CompressedMatrix};
use crate::planner::make_schedule;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub hidden: Vec<usize>,
    pub batches: Vec<usize>,
    /// Applies per (hidden, batch) point.
    pub applies: usize,
    pub schedule: String,
    pub alpha: f64,
    pub group_size: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 2048, 4096],
            batches: vec![1, 4, 16],
            applies: 100,
            schedule: "8+3+2".into(),
            alpha: 1.0 / 16.0,
            group_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Impl {
    Fused,
    Materialized,
}

impl Impl {
    pub fn label(self) -> &'static str {
        match self {
            Impl::Fused => "fused",
            Impl::Materialized => "materialized",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub imp: Impl,
    pub hidden: usize,
    pub batch: usize,
    pub applies: usize,
    /// Wall time for all applies; the materialized path includes one decompression.
    pub seconds: f64,
    /// Materialized seconds over fused seconds at this point (same on both rows).
    pub speedup: f64,
    /// Relative L2 gap between the two outputs of the first apply.
    pub rel_err: f64,
    /// Largest single heap allocation during the applies, if tracking is installed.
    pub largest_alloc: Option<usize>,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "impl,hidden,batch,applies,seconds,ms_per_apply,speedup,rel_err,largest_alloc_bytes";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.4},{:.3},{:e},{}",
            self.imp.label(),
            self.hidden,
            self.batch,
            self.applies,
            self.seconds,
            1e3 * self.seconds / self.applies as f64,
            self.speedup,
            self.rel_err,
            self.largest_alloc.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

/// RTN-compressed `h × h` package with near-orthonormal random factors and
/// a decaying spectrum.
pub fn synthetic_package(h: usize, spec: &str, alpha: f64, group_size: usize, seed: u64) -> Result<CompressedMatrix> {
    let schedule = make_schedule(spec, alpha, h, h)?;
    let r = schedule.total_ranks().max(1);
    let mut rng = Rng::for_stream(seed, &format!("bench/{h}"));
    let scale = 1.0 / (h as f32).sqrt();
    let u = gaussian_matrix(&mut rng, h, r).scale(scale)?;
    let v = gaussian_matrix(&mut rng, h, r).scale(scale)?;
    let sigma = (0..r).map(|i| 1.0 / (1.0 + i as f64).sqrt()).collect();
    compress_factors(&SvdResult { u, sigma, v }, None, &schedule, group_size)
}

fn rel_l2(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    let den: f64 = b.iter().map(|&y| (y as f64).powi(2)).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn apply_fused(cm: &CompressedMatrix, x: &Matrix) -> Result<Vec<f32>> {
    if x.cols() == 1 {
        fused_apply(cm, x.data(), None)
    } else {
        Ok(fused_apply_batch(cm, x, None)?.into_data())
    }
}

/// One fused and one materialized row for each `(batch)` at hidden size of `cm`.
pub fn bench_point(cm: &CompressedMatrix, batches: &[usize], applies: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if applies == 0 {
        return Err(Error::InvalidArgument("bench needs at least one apply".into()));
    }
    let h = cm.h_in();
    let tracking = alloc_track::is_active();
    let mut rows = Vec::with_capacity(2 * batches.len());
    for &b in batches {
        if b == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let x = gaussian_matrix(&mut Rng::for_stream(seed, &format!("bench-input/{h}/{b}")), h, b);

        alloc_track::reset();
        let t = Instant::now();
        let fused_out = apply_fused(cm, &x)?;
        for _ in 1..applies {
            std::hint::black_box(apply_fused(cm, &x)?);
        }
        let fused_s = t.elapsed().as_secs_f64();
        let fused_largest = tracking.then(|| alloc_track::stats().largest);

        alloc_track::reset();
        let t = Instant::now();
        let dense = decompress_matrix(cm)?;
        let mat_out = matmul(&dense, &x)?;
        for _ in 1..applies {
            std::hint::black_box(matmul(&dense, &x)?);
        }
        let mat_s = t.elapsed().as_secs_f64();
        let mat_largest = tracking.then(|| alloc_track::stats().largest);
        drop(dense);

        let rel_err = rel_l2(&fused_out, mat_out.data());
        let speedup = mat_s / fused_s;
        for (imp, seconds, largest_alloc) in [
            (Impl::Fused, fused_s, fused_largest),
            (Impl::Materialized, mat_s, mat_largest),
        ] {
            rows.push(BenchRow {
                imp,
                hidden: h,
                batch: b,
                applies,
                seconds,
                speedup,
                rel_err,
                largest_alloc,
            });
        }
    }
    Ok(rows)
}

/// Full sweep; `progress` sees each row as it is produced.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    let mut all = Vec::new();
    for &h in &cfg.hidden {
        let cm = synthetic_package(h, &cfg.schedule, cfg.alpha, cfg.group_size, cfg.seed)?;
        for row in bench_point(&cm, &cfg.batches, cfg.applies, cfg.seed)? {
            progress(&row);
            all.push(row);
        }
    }
    Ok(all)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BenchRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}
