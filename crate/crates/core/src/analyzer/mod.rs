//! Activation-level error analysis, synthetic long-tail deltas and
//! equal-budget method comparisons.

mod report;

pub use report::{ErrorReport, ReportRow, Scope};

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::linalg::random_orthonormal;
use crate::numerics::SvdResult;
use crate::numerics::{gaussian_matrix, matrix_shape_str, thin_svd, Matrix, Rng};
use crate::pipeline::{compress_factors, decompress_matrix};
use crate::planner::{budget_bits, budget_ranks, make_schedule, Allocation, TIERS};
use crate::quant::{dequantize, sign_quantize_with, MetaPrecision, DEFAULT_GROUP_SIZE};

/// Mean over all entries of `(W·X − Ŵ·X)²`, with `(W − Ŵ)` formed first and
/// everything accumulated in `f64`.
pub fn activation_error(w: &Matrix, w_hat: &Matrix, x: &Matrix) -> Result<f64> {
    if w.shape() != w_hat.shape() {
        return Err(Error::DimensionMismatch {
            left: matrix_shape_str(w.shape()),
            right: matrix_shape_str(w_hat.shape()),
            context: "activation error: W and Ŵ shapes",
        });
    }
    if x.rows() != w.cols() {
        return Err(Error::DimensionMismatch {
            left: matrix_shape_str(w.shape()),
            right: matrix_shape_str(x.shape()),
            context: "activation error: input rows must equal weight columns",
        });
    }
    let mut diff = vec![0.0f64; w.cols()];
    let mut acc = vec![0.0f64; x.cols()];
    let mut total = 0.0f64;
    for r in 0..w.rows() {
        for ((d, &a), &b) in diff.iter_mut().zip(w.row(r)).zip(w_hat.row(r)) {
            *d = a as f64 - b as f64;
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &dk) in diff.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            for (s, &xv) in acc.iter_mut().zip(x.row(k)) {
                *s += dk * xv as f64;
            }
        }
        total += acc.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total / (w.rows() * x.cols()) as f64)
}

/// Activation error with every column outside `columns` zeroed in both `W`
/// and `Ŵ`.
pub fn outlier_activation_error(w: &Matrix, w_hat: &Matrix, x: &Matrix, columns: &[usize]) -> Result<f64> {
    let mut keep = vec![false; w.cols()];
    for &c in columns {
        if c >= w.cols() {
            return Err(Error::InvalidArgument(format!("outlier column {c} out of range")));
        }
        keep[c] = true;
    }
    let mask = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |i, j| if keep[j] { m.get(i, j) } else { 0.0 });
    activation_error(&mask(w)?, &mask(w_hat)?, x)
}

/// Low / medium / high layer ranges: the first two bins get `⌊11n/32⌋` layers
/// each and the last bin the rest.
pub fn layer_bins(n_layers: usize) -> Result<[Range<usize>; 3]> {
    if n_layers < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 layers to bin, got {n_layers}"
        )));
    }
    let a = 11 * n_layers / 32;
    Ok([0..a, a..2 * a, 2 * a..n_layers])
}

/// Label of the bin holding `layer`.
pub fn layer_bin_label(n_layers: usize, layer: usize) -> Result<&'static str> {
    let bins = layer_bins(n_layers)?;
    ["low", "medium", "high"]
        .into_iter()
        .zip(bins)
        .find(|(_, r)| r.contains(&layer))
        .map(|(label, _)| label)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} outside 0..{n_layers}")))
}

pub const DEFAULT_OUTLIER_FRACTION: f64 = 0.01;

/// The `max(1, ⌊fraction·cols⌋)` columns with the largest L1 norm, ties to
/// the lower index; returned in ascending order.
pub fn outlier_columns(w: &Matrix, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "outlier fraction {fraction} outside (0, 1]"
        )));
    }
    // the small epsilon keeps e.g. 0.07·100 from flooring to 6
    let count = ((fraction * w.cols() as f64 + 1e-9).floor() as usize).clamp(1, w.cols());
    let mut score = vec![0.0f64; w.cols()];
    for r in 0..w.rows() {
        for (s, &v) in score.iter_mut().zip(w.row(r)) {
            *s += (v as f64).abs();
        }
    }
    let mut order: Vec<usize> = (0..w.cols()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut picked = order[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// `Σ_i σ_i u_i v_iᵀ + noise·G` over `min(h_out, h_in)` random orthonormal
/// pairs with `σ_i = σ₀ (i+1)^(−decay)`. `σ₀` is chosen so the low-rank part
/// has unit RMS entry.
pub fn synth_longtail_delta(rng: &mut Rng, h_out: usize, h_in: usize, decay: f64, noise: f64) -> Result<Matrix> {
    if decay.is_nan() || decay <= 0.0 || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "decay must be > 0 (got {decay}), noise finite"
        )));
    }
    let r = h_out.min(h_in);
    let energy: f64 = (0..r).map(|i| ((i + 1) as f64).powf(-2.0 * decay)).sum();
    let sigma0 = ((h_out * h_in) as f64 / energy).sqrt();
    let sigma: Vec<f64> = (0..r).map(|i| sigma0 * ((i + 1) as f64).powf(-decay)).collect();
    let u = random_orthonormal(rng, h_out, r)?;
    let v = random_orthonormal(rng, h_in, r)?;
    let vt = v.transpose();
    let g = gaussian_matrix(rng, h_out, h_in);
    let mut out = vec![0.0f64; h_out * h_in];
    for (i, row) in out.chunks_mut(h_in).enumerate() {
        for (k, &s) in sigma.iter().enumerate() {
            let coef = u.get(i, k) as f64 * s;
            for (o, &vv) in row.iter_mut().zip(vt.row(k)) {
                *o += coef * vv as f64;
            }
        }
        for (o, &gv) in row.iter_mut().zip(g.row(i)) {
            *o += noise * gv as f64;
        }
    }
    Matrix::from_f64(h_out, h_in, &out)
}

/// One instance of the fixed synthetic suite.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub seed: u64,
    pub decay: f64,
    pub delta: Matrix,
    /// `h_in × samples` Gaussian calibration input.
    pub x: Matrix,
}

pub const SUITE_NOISE: f64 = 0.01;
pub const SUITE_SAMPLES: usize = 512;

impl SyntheticCase {
    /// Delta from `Rng::new(seed)`, calibration from the `"calibration"` stream.
    pub fn new(seed: u64, h_out: usize, h_in: usize, decay: f64, noise: f64, samples: usize) -> Result<Self> {
        let delta = synth_longtail_delta(&mut Rng::new(seed), h_out, h_in, decay, noise)?;
        let x = gaussian_matrix(&mut Rng::for_stream(seed, "calibration"), h_in, samples);
        Ok(SyntheticCase { seed, decay, delta, x })
    }

    /// Seeds 0–4 use decay 0.8, seeds 5–9 decay 1.2; 512 samples, noise 0.01.
    pub fn suite(seed: u64, h: usize) -> Result<Self> {
        let decay = if seed < 5 { 0.8 } else { 1.2 };
        Self::new(seed, h, h, decay, SUITE_NOISE, SUITE_SAMPLES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Truncated SVD with 16-bit factors.
    LowRank16,
    /// Whole-matrix sign quantization with a single scale.
    Sign1Bit,
    /// Uniform 3-bit singular vectors.
    Single3,
    /// 8-bit, 3-bit and 2-bit rank groups.
    Triple,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LowRank16, Method::Sign1Bit, Method::Single3, Method::Triple];

    pub fn label(self) -> &'static str {
        match self {
            Method::LowRank16 => "low-rank-16",
            Method::Sign1Bit => "sign-1bit",
            Method::Single3 => "single-3",
            Method::Triple => "triple-8+3+2",
        }
    }

    /// Schedule spec for the low-rank methods.
    pub fn spec(self) -> Option<&'static str> {
        match self {
            Method::LowRank16 => Some("16"),
            Method::Sign1Bit => None,
            Method::Single3 => Some("3"),
            Method::Triple => Some("8+3+2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub mse_all: f64,
    pub mse_outliers: f64,
    pub code_bits: u64,
    pub budget_bits: f64,
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub group_size: usize,
    pub outlier_fraction: f64,
    pub methods: Vec<Method>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            group_size: DEFAULT_GROUP_SIZE,
            outlier_fraction: DEFAULT_OUTLIER_FRACTION,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Evaluates each method at budget `α` on `delta` with calibration `x`.
/// The SVD is computed once and shared by the low-rank methods. Schedules
/// that would need more ranks than `min(h_out, h_in)` are cut there.
pub fn compare_methods(delta: &Matrix, x: &Matrix, alpha: f64) -> Result<Vec<MethodResult>> {
    compare_methods_with(delta, x, alpha, &CompareOptions::default())
}

pub fn compare_methods_with(
    delta: &Matrix,
    x: &Matrix,
    alpha: f64,
    opts: &CompareOptions,
) -> Result<Vec<MethodResult>> {
    let (h_out, h_in) = delta.shape();
    let schedules = opts
        .methods
        .iter()
        .filter_map(|m| {
            m.spec()
                .map(|s| make_schedule(s, alpha, h_out, h_in).map(|sch| (*m, sch.truncated(h_out.min(h_in)))))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rank = schedules.iter().map(|(_, s)| s.total_ranks()).max().unwrap_or(0);
    let svd = if max_rank > 0 {
        Some(thin_svd(delta, max_rank)?)
    } else {
        None
    };
    let outliers = outlier_columns(delta, opts.outlier_fraction)?;
    let budget = budget_bits(alpha, h_out, h_in);

    let mut results = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let (w_hat, code_bits) = match method.spec() {
            None => {
                let q = sign_quantize_with(delta, MetaPrecision::Half)?;
                (dequantize(&q)?, q.code_bits() as u64)
            }
            Some(_) => {
                let schedule = &schedules
                    .iter()
                    .find(|(m, _)| *m == method)
                    .expect("schedule built above")
                    .1;
                match &svd {
                    Some(svd) if schedule.total_ranks() > 0 => {
                        let cm = compress_factors(svd, Some(x), schedule, opts.group_size)?;
                        (decompress_matrix(&cm)?, cm.code_bits())
                    }
                    _ => (Matrix::zeros(h_out, h_in)?, 0),
                }
            }
        };
        results.push(MethodResult {
            method,
            mse_all: activation_error(delta, &w_hat, x)?,
            mse_outliers: outlier_activation_error(delta, &w_hat, x, &outliers)?,
            code_bits,
            budget_bits: budget,
        });
    }
    Ok(results)
}

/// Search objective: mean activation error of an allocation's schedule over
/// a set of delta/calibration pairs. Each pair's SVD is computed once, up to
/// the largest rank count the budget can buy.
pub struct ProxyObjective {
    cases: Vec<ProxyCase>,
    alpha: f64,
    group_size: usize,
}

struct ProxyCase {
    delta: Matrix,
    x: Matrix,
    svd: SvdResult,
}

impl ProxyObjective {
    pub fn new(pairs: Vec<(Matrix, Matrix)>, alpha: f64, group_size: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "proxy objective needs at least one delta".into(),
            ));
        }
        let cases = pairs
            .into_iter()
            .map(|(delta, x)| {
                let (h_out, h_in) = delta.shape();
                let cheapest = *TIERS.last().expect("tiers are non-empty");
                let rank = budget_ranks(cheapest, alpha, h_out, h_in).clamp(1, h_out.min(h_in));
                let svd = thin_svd(&delta, rank)?;
                Ok(ProxyCase { delta, x, svd })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProxyObjective {
            cases,
            alpha,
            group_size,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Shape of the first delta, the one the search budgets against.
    pub fn dims(&self) -> (usize, usize) {
        self.cases[0].delta.shape()
    }

    pub fn evaluate(&self, allocation: &Allocation) -> Result<f64> {
        let schedule = allocation.to_schedule(self.alpha)?;
        let mut total = 0.0;
        for c in &self.cases {
            let (h_out, h_in) = c.delta.shape();
            if !allocation.is_feasible(self.alpha, h_out, h_in) {
                return Err(Error::BudgetExhausted {
                    needed: allocation.payload_bits(h_out, h_in) as f64,
                    budget: budget_bits(self.alpha, h_out, h_in),
                });
            }
            let w_hat = if schedule.total_ranks() == 0 {
                Matrix::zeros(h_out, h_in)?
            } else {
                decompress_matrix(&compress_factors(&c.svd, Some(&c.x), &schedule, self.group_size)?)?
            };
            total += activation_error(&c.delta, &w_hat, &c.x)?;
        }
        Ok(total / self.cases.len() as f64)
    }

    /// [`Self::evaluate`] with errors mapped to `+inf`, for use as a search objective.
    pub fn score(&self, allocation: &Allocation) -> f64 {
        self.evaluate(allocation).unwrap_or(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests;
