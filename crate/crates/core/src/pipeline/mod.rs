//! Delta compression: SVD of each delta matrix, then per-rank-group
//! quantization of the singular vectors, V side first and U side second.
//!
//! For a group with ranks `[b, e)` at `k` bits, `Vᵀ[b..e]` is quantized
//! against the calibration input `X`, then `U[:, b..e]` is quantized against
//! `diag(σ[b..e]) · V̂ᵀ[b..e] · X`, the activations the dequantized V side
//! actually produces. Singular values are kept separately at half precision.

mod fused;
mod package;

pub use fused::{fused_apply, fused_apply_batch};
pub use package::{predicted_payload_len, PACKAGE_MAGIC, PACKAGE_VERSION};

use glob::Pattern;
use indexmap::IndexMap;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model_io::{DeltaWeights, Tensor};
use crate::numerics::half_ext::round_f16;
use crate::numerics::{gaussian_matrix, matmul, thin_svd, Matrix, Rng, SvdResult};
use crate::planner::{make_schedule_with, parse_spec, PrecisionSchedule, RankGroup, ScheduleConfig};
use crate::quant::{
    dequantize, rtn_quantize_with, sign_quantize_with, GptqPrep, MetaPrecision, QuantParams, QuantizedTensor,
    DEFAULT_GROUP_SIZE,
};

/// Samples in the synthetic calibration input used when none is supplied.
pub const SYNTHETIC_SAMPLES: usize = 512;

/// One stored singular-vector slice.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Quantized(QuantizedTensor),
    /// Raw values, each exactly representable at half precision.
    Half(Matrix),
}

impl Factor {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Factor::Quantized(q) => (q.rows(), q.cols()),
            Factor::Half(m) => m.shape(),
        }
    }

    pub fn bits(&self) -> u8 {
        match self {
            Factor::Quantized(q) => q.bits(),
            Factor::Half(_) => 16,
        }
    }

    #[inline]
    pub fn decode_row(&self, r: usize, out: &mut [f32]) {
        match self {
            Factor::Quantized(q) => q.dequantize_row(r, out),
            Factor::Half(m) => out.copy_from_slice(m.row(r)),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self {
            Factor::Quantized(q) => dequantize(q),
            Factor::Half(m) => Ok(m.clone()),
        }
    }

    pub fn code_bits(&self) -> u64 {
        let (r, c) = self.shape();
        (r * c) as u64 * self.bits() as u64
    }

    /// Stored scale and zero-point values (16 bits each on disk).
    pub fn meta_values(&self) -> usize {
        match self {
            Factor::Quantized(q) => q.scales().len() + q.zeros().len(),
            Factor::Half(_) => 0,
        }
    }
}

/// Ranks `[r_begin, r_end)` of one matrix: `u` is `h_out × width`, `vt` is
/// `width × h_in` (the transposed V slice).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedGroup {
    pub bits: u8,
    pub r_begin: usize,
    pub r_end: usize,
    pub u: Factor,
    pub vt: Factor,
}

impl CompressedGroup {
    pub fn width(&self) -> usize {
        self.r_end - self.r_begin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMatrix {
    h_out: usize,
    h_in: usize,
    sigma: Vec<f32>,
    groups: Vec<CompressedGroup>,
    schedule: PrecisionSchedule,
}

impl CompressedMatrix {
    /// Validates shapes, contiguity and the bit width of every factor.
    pub fn from_parts(
        h_out: usize,
        h_in: usize,
        sigma: Vec<f32>,
        groups: Vec<CompressedGroup>,
        alpha: f64,
    ) -> Result<Self> {
        let corrupt = |msg: String| Error::Corrupt(msg);
        let schedule = PrecisionSchedule::new(
            groups
                .iter()
                .map(|g| RankGroup {
                    bits: g.bits,
                    r_begin: g.r_begin,
                    r_end: g.r_end,
                })
                .collect(),
            alpha,
        )?;
        if schedule.groups().len() != groups.len() {
            return Err(corrupt("empty rank group".into()));
        }
        if sigma.len() != schedule.total_ranks() {
            return Err(corrupt(format!(
                "{} singular values for {} ranks",
                sigma.len(),
                schedule.total_ranks()
            )));
        }
        if schedule.total_ranks() > h_out.min(h_in) {
            return Err(Error::RankOverflow {
                ranks: schedule.total_ranks(),
                h_out,
                h_in,
            });
        }
        for &s in &sigma {
            if !s.is_finite() || half::f16::from_f32(s).to_f32() != s {
                return Err(corrupt(format!(
                    "singular value {s} is not a finite half-precision value"
                )));
            }
        }
        for g in &groups {
            let w = g.width();
            if g.u.shape() != (h_out, w) || g.vt.shape() != (w, h_in) {
                return Err(corrupt(format!(
                    "factor shapes do not match group [{}, {})",
                    g.r_begin, g.r_end
                )));
            }
            if g.u.bits() != g.bits || g.vt.bits() != g.bits {
                return Err(corrupt(format!("factor bit width differs from group width {}", g.bits)));
            }
        }
        Ok(CompressedMatrix {
            h_out,
            h_in,
            sigma,
            groups,
            schedule,
        })
    }

    pub fn h_out(&self) -> usize {
        self.h_out
    }

    pub fn h_in(&self) -> usize {
        self.h_in
    }

    pub fn sigma(&self) -> &[f32] {
        &self.sigma
    }

    pub fn groups(&self) -> &[CompressedGroup] {
        &self.groups
    }

    pub fn schedule(&self) -> &PrecisionSchedule {
        &self.schedule
    }

    /// Bits spent on codes and raw 16-bit factor values; equals the schedule's
    /// budgeted payload.
    pub fn code_bits(&self) -> u64 {
        self.groups.iter().map(|g| g.u.code_bits() + g.vt.code_bits()).sum()
    }

    /// Bits for scales, zero points and singular values, 16 each.
    pub fn meta_bits(&self) -> u64 {
        let meta: usize = self.groups.iter().map(|g| g.u.meta_values() + g.vt.meta_values()).sum();
        16 * (meta + self.sigma.len()) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PackageEntry {
    Matrix(CompressedMatrix),
    /// Stored uncompressed at half precision (1-D and excluded tensors).
    Raw(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPackage {
    pub alpha: f64,
    pub schedule_spec: String,
    pub backbone_checksum: u64,
    pub entries: IndexMap<String, PackageEntry>,
}

/// Size accounting for a package, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PackageStats {
    /// Codes plus raw 16-bit factors of compressed matrices.
    pub code_bits: u64,
    /// `16 · α · Σ h_out · h_in` over compressed matrices.
    pub budget_bits: f64,
    /// Scales, zero points and singular values.
    pub meta_bits: u64,
    /// Tensors stored raw at 16 bits.
    pub raw_bits: u64,
    /// Elements in the compressed matrices.
    pub compressed_params: u64,
}

impl PackageStats {
    /// `meta_bits / code_bits`.
    pub fn overhead_fraction(&self) -> f64 {
        if self.code_bits == 0 {
            0.0
        } else {
            self.meta_bits as f64 / self.code_bits as f64
        }
    }
}

impl DeltaPackage {
    pub fn stats(&self) -> PackageStats {
        let mut s = PackageStats::default();
        for entry in self.entries.values() {
            match entry {
                PackageEntry::Matrix(cm) => {
                    s.code_bits += cm.code_bits();
                    s.meta_bits += cm.meta_bits();
                    s.budget_bits += 16.0 * cm.schedule().alpha() * (cm.h_out * cm.h_in) as f64;
                    s.compressed_params += (cm.h_out * cm.h_in) as u64;
                }
                PackageEntry::Raw(t) => s.raw_bits += 16 * t.data.data().len() as u64,
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct CompressOptions {
    pub group_size: usize,
    /// Seed for Gaussian calibration inputs used where none is supplied;
    /// `None` makes a missing calibration matrix an error.
    pub synthetic_calibration: Option<u64>,
    pub calibration_samples: usize,
    /// Glob patterns (`*`, `?`) of 2-D tensors to store raw instead.
    pub exclude: Vec<String>,
    pub schedule_config: ScheduleConfig,
}

impl Default for CompressOptions {
    fn default() -> Self {
        CompressOptions {
            group_size: DEFAULT_GROUP_SIZE,
            synthetic_calibration: None,
            calibration_samples: SYNTHETIC_SAMPLES,
            exclude: Vec::new(),
            schedule_config: ScheduleConfig::default(),
        }
    }
}

fn half_matrix(m: &Matrix, context: &'static str) -> Result<Matrix> {
    let data = m
        .data()
        .iter()
        .map(|&v| round_f16(v as f64, context).map(|h| h as f32))
        .collect::<Result<Vec<f32>>>()?;
    Matrix::new(m.rows(), m.cols(), data)
}

/// Multiplies row `r` of `m` by `s[r]`.
fn scale_rows(m: Matrix, s: &[f32]) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    let mut data = m.into_data();
    for (row, &f) in data.chunks_mut(cols).zip(s) {
        row.iter_mut().for_each(|v| *v *= f);
    }
    Matrix::new(rows, cols, data)
}

/// Quantizes precomputed SVD factors under `schedule`. Without calibration
/// input the multi-bit groups use plain round-to-nearest.
pub fn compress_factors(
    svd: &SvdResult,
    x: Option<&Matrix>,
    schedule: &PrecisionSchedule,
    group_size: usize,
) -> Result<CompressedMatrix> {
    let (h_out, h_in) = (svd.u.rows(), svd.v.rows());
    let ranks = schedule.total_ranks();
    if ranks > svd.rank() {
        return Err(Error::RankOverflow { ranks, h_out, h_in });
    }
    if let Some(x) = x {
        if x.rows() != h_in {
            return Err(Error::DimensionMismatch {
                left: format!("{h_out}x{h_in}"),
                right: format!("{}x{}", x.rows(), x.cols()),
                context: "calibration rows must equal the delta's input dimension",
            });
        }
    }
    let needs_gptq = schedule.groups().iter().any(|g| !matches!(g.bits, 1 | 16));
    let v_prep = match x {
        Some(x) if needs_gptq => Some(GptqPrep::new(x)?),
        _ => None,
    };
    let sigma = svd.sigma[..ranks]
        .iter()
        .map(|&s| round_f16(s, "singular value").map(|h| h as f32))
        .collect::<Result<Vec<f32>>>()?;

    let mut groups = Vec::with_capacity(schedule.groups().len());
    for g in schedule.groups() {
        let u = svd.u.column_slice(g.r_begin..g.r_end)?;
        let vt = svd.v.column_slice(g.r_begin..g.r_end)?.transpose();
        let (u, vt) = match g.bits {
            16 => (
                Factor::Half(half_matrix(&u, "U factor")?),
                Factor::Half(half_matrix(&vt, "V factor")?),
            ),
            1 => (
                Factor::Quantized(sign_quantize_with(&u, MetaPrecision::Half)?),
                Factor::Quantized(sign_quantize_with(&vt, MetaPrecision::Half)?),
            ),
            k => {
                let params = QuantParams::new(k, group_size).with_meta(MetaPrecision::Half);
                match (x, &v_prep) {
                    (Some(x), Some(prep)) => {
                        let vq = prep.quantize(&vt, params)?;
                        let propagated = scale_rows(matmul(&dequantize(&vq)?, x)?, &sigma[g.r_begin..g.r_end])?;
                        let uq = GptqPrep::new(&propagated)?.quantize(&u, params)?;
                        (Factor::Quantized(uq), Factor::Quantized(vq))
                    }
                    _ => (
                        Factor::Quantized(rtn_quantize_with(&u, params)?),
                        Factor::Quantized(rtn_quantize_with(&vt, params)?),
                    ),
                }
            }
        };
        groups.push(CompressedGroup {
            bits: g.bits,
            r_begin: g.r_begin,
            r_end: g.r_end,
            u,
            vt,
        });
    }
    CompressedMatrix::from_parts(h_out, h_in, sigma, groups, schedule.alpha())
}

/// Thin SVD to the scheduled rank, then [`compress_factors`] with calibration `x`
/// (`h_in × n_samples`) and the default group size.
pub fn compress_matrix(delta: &Matrix, x: &Matrix, schedule: &PrecisionSchedule) -> Result<CompressedMatrix> {
    compress_matrix_with(delta, Some(x), schedule, DEFAULT_GROUP_SIZE)
}

pub fn compress_matrix_with(
    delta: &Matrix,
    x: Option<&Matrix>,
    schedule: &PrecisionSchedule,
    group_size: usize,
) -> Result<CompressedMatrix> {
    let (h_out, h_in) = delta.shape();
    let ranks = schedule.total_ranks();
    if ranks > h_out.min(h_in) {
        return Err(Error::RankOverflow { ranks, h_out, h_in });
    }
    if !schedule.fits_budget(h_out, h_in) {
        return Err(Error::BudgetExhausted {
            needed: schedule.payload_bits(h_out, h_in) as f64,
            budget: crate::planner::budget_bits(schedule.alpha(), h_out, h_in),
        });
    }
    if ranks == 0 {
        return CompressedMatrix::from_parts(h_out, h_in, Vec::new(), Vec::new(), schedule.alpha());
    }
    let svd = thin_svd(delta, ranks)?;
    compress_factors(&svd, x, schedule, group_size)
}

/// `Σ_g Û_g · diag(σ_g) · V̂ᵀ_g`, accumulated in `f64`.
pub fn decompress_matrix(cm: &CompressedMatrix) -> Result<Matrix> {
    let (h_out, h_in) = (cm.h_out, cm.h_in);
    let mut acc = vec![0.0f64; h_out * h_in];
    for g in &cm.groups {
        let u = g.u.to_matrix()?;
        let vt = g.vt.to_matrix()?;
        let sig = &cm.sigma[g.r_begin..g.r_end];
        for (i, out) in acc.chunks_mut(h_in).enumerate() {
            for (r, &s) in sig.iter().enumerate() {
                let coef = u.get(i, r) as f64 * s as f64;
                if coef == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(vt.row(r)) {
                    *o += coef * v as f64;
                }
            }
        }
    }
    Matrix::from_f64(h_out, h_in, &acc)
}

fn is_excluded(patterns: &[Pattern], name: &str) -> bool {
    patterns.iter().any(|p| p.matches(name))
}

/// Compresses every 2-D delta tensor with a schedule built for its own
/// dimensions; 1-D and excluded tensors are stored raw at half precision.
pub fn compress_model(
    delta: &DeltaWeights,
    calibration: &IndexMap<String, Matrix>,
    spec: &str,
    alpha: f64,
    opts: &CompressOptions,
) -> Result<DeltaPackage> {
    parse_spec(spec)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let patterns = opts
        .exclude
        .iter()
        .map(|p| Pattern::new(p).map_err(|e| Error::InvalidArgument(format!("exclude pattern '{p}': {e}"))))
        .collect::<Result<Vec<_>>>()?;

    let names: Vec<&String> = delta.tensors.keys().collect();
    if opts.synthetic_calibration.is_none() {
        let missing = names
            .iter()
            .find(|&&n| !delta.tensors[n].is_vector && !is_excluded(&patterns, n) && !calibration.contains_key(n));
        if let Some(&name) = missing {
            return Err(Error::MissingCalibration(name.clone()));
        }
    }
    let entries = names
        .par_iter()
        .map(|&name| {
            let t = &delta.tensors[name];
            if t.is_vector || is_excluded(&patterns, name) {
                let data = half_matrix(&t.data, "raw tensor")?;
                return Ok((
                    name.clone(),
                    PackageEntry::Raw(Tensor {
                        data,
                        is_vector: t.is_vector,
                    }),
                ));
            }
            let (h_out, h_in) = t.data.shape();
            let synthetic;
            let x = match (calibration.get(name), opts.synthetic_calibration) {
                (Some(x), _) => x,
                (None, Some(seed)) => {
                    let mut rng = Rng::for_stream(seed, &format!("calibration/{name}"));
                    synthetic = gaussian_matrix(&mut rng, h_in, opts.calibration_samples);
                    &synthetic
                }
                (None, None) => return Err(Error::MissingCalibration(name.clone())),
            };
            let schedule = make_schedule_with(spec, alpha, h_out, h_in, &opts.schedule_config)?;
            let cm = compress_matrix_with(&t.data, Some(x), &schedule, opts.group_size)?;
            Ok((name.clone(), PackageEntry::Matrix(cm)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DeltaPackage {
        alpha,
        schedule_spec: spec.to_string(),
        backbone_checksum: delta.backbone_checksum,
        entries: entries.into_iter().collect(),
    })
}

pub fn decompress_package(pkg: &DeltaPackage) -> Result<DeltaWeights> {
    let tensors = pkg
        .entries
        .iter()
        .map(|(name, entry)| {
            let t = match entry {
                PackageEntry::Matrix(cm) => Tensor::matrix(decompress_matrix(cm)?),
                PackageEntry::Raw(t) => t.clone(),
            };
            Ok((name.clone(), t))
        })
        .collect::<Result<IndexMap<_, _>>>()?;
    Ok(DeltaWeights {
        tensors,
        backbone_checksum: pkg.backbone_checksum,
    })
}
