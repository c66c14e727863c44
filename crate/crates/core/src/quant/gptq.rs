//! Calibration-aware quantization minimizing `‖WX − ŴX‖²`.
//!
//! Columns are quantized left to right in natural order. After column `j` is
//! rounded, each row's rounding error is pushed onto the not-yet-quantized
//! columns through row `j` of the upper Cholesky factor of `H⁻¹`, where
//! `H = XXᵀ + λI`. Grids come from the original weights and stay fixed, so
//! the compensation only changes which code each weight receives.

use super::rtn::fit_grids;
use super::{assemble, QuantParams, QuantizedTensor};
use crate::error::{Error, Result};
use crate::numerics::linalg::{cholesky_upper, spd_inverse};
use crate::numerics::{matrix_shape_str, Matrix};

const DAMP_FRACTION: f64 = 0.01;
const DAMP_RETRIES: usize = 3;

#[derive(Debug, Clone)]
pub struct GptqOutput {
    pub tensor: QuantizedTensor,
    /// `‖WX − ŴX‖_F²` of the returned codes.
    pub objective: f64,
}

/// `x` is `cols(w) × n_samples`.
pub fn gptq_quantize(w: &Matrix, x: &Matrix, bits: u8, group_size: usize) -> Result<GptqOutput> {
    gptq_quantize_with(w, x, QuantParams::new(bits, group_size))
}

pub fn gptq_quantize_with(w: &Matrix, x: &Matrix, params: QuantParams) -> Result<GptqOutput> {
    let prep = GptqPrep::new(x)?;
    let tensor = prep.quantize(w, params)?;
    let objective = output_error(w, &tensor, x)?;
    Ok(GptqOutput { tensor, objective })
}

/// Inverse-Hessian factor for one calibration matrix, reusable across every
/// weight whose input dimension matches.
pub(crate) struct GptqPrep {
    n: usize,
    hinv_chol: Vec<f64>,
}

impl GptqPrep {
    pub(crate) fn new(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        let hinv_chol = damped_inverse_factor(&gram(x), n)?;
        Ok(GptqPrep { n, hinv_chol })
    }

    pub(crate) fn quantize(&self, w: &Matrix, params: QuantParams) -> Result<QuantizedTensor> {
        params.validate_multibit()?;
        let n = self.n;
        if n != w.cols() {
            return Err(Error::DimensionMismatch {
                left: matrix_shape_str(w.shape()),
                right: format!("{n}x?"),
                context: "gptq: calibration rows must equal weight columns",
            });
        }
        let hinv_chol = &self.hinv_chol;
        let grids = fit_grids(w, params)?;
        let gpr = n.div_ceil(params.group_size);

        let mut codes = vec![0u8; w.rows() * n];
        let mut row = vec![0.0f64; n];
        for r in 0..w.rows() {
            row.iter_mut().zip(w.row(r)).for_each(|(d, &s)| *d = s as f64);
            for j in 0..n {
                let grid = &grids[r * gpr + j / params.group_size];
                let code = grid.code(row[j]);
                codes[r * n + j] = code;
                let err = (row[j] - grid.value(code)) / hinv_chol[j * n + j];
                if err != 0.0 {
                    let u_row = &hinv_chol[j * n..(j + 1) * n];
                    for k in j + 1..n {
                        row[k] -= err * u_row[k];
                    }
                }
            }
        }
        assemble(w.rows(), n, params, &grids, &codes)
    }
}

/// `XXᵀ` in `f64`, row-major `rows(x)²`.
fn gram(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().map(|&v| v as f64).collect()).collect();
    let mut h = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            h[i * n + j] = s;
            h[j * n + i] = s;
        }
    }
    h
}

/// Upper Cholesky factor of `(H + λI)⁻¹`, raising `λ` tenfold on failure.
fn damped_inverse_factor(h: &[f64], n: usize) -> Result<Vec<f64>> {
    let mean_diag = (0..n).map(|i| h[i * n + i]).sum::<f64>() / n as f64;
    // an all-zero calibration set carries no weighting; fall back to identity
    let mut lambda = if mean_diag > 0.0 {
        DAMP_FRACTION * mean_diag
    } else {
        1.0
    };
    for _ in 0..=DAMP_RETRIES {
        let mut damped = h.to_vec();
        for i in 0..n {
            damped[i * n + i] += lambda;
        }
        if let Some(u) = spd_inverse(&damped, n).and_then(|inv| cholesky_upper(&inv, n)) {
            return Ok(u);
        }
        lambda *= 10.0;
    }
    Err(Error::NumericallySingular { retries: DAMP_RETRIES })
}

/// `‖(W − Ŵ) X‖_F²` accumulated in `f64`.
pub(crate) fn output_error(w: &Matrix, q: &QuantizedTensor, x: &Matrix) -> Result<f64> {
    let mut deq = vec![0.0f32; w.cols()];
    let mut diff = vec![0.0f64; w.cols()];
    let mut acc = vec![0.0f64; x.cols()];
    let mut total = 0.0f64;
    for r in 0..w.rows() {
        q.dequantize_row(r, &mut deq);
        for ((d, &a), &b) in diff.iter_mut().zip(w.row(r)).zip(&deq) {
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
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::NonFinite("gptq objective"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, Rng};
    use crate::quant::{dequantize, rtn_quantize};

    fn objective_oracle(w: &Matrix, what: &Matrix, x: &Matrix) -> f64 {
        let mut total = 0.0;
        for i in 0..w.rows() {
            for c in 0..x.cols() {
                let mut s = 0.0f64;
                for k in 0..w.cols() {
                    s += (w.get(i, k) as f64 - what.get(i, k) as f64) * x.get(k, c) as f64;
                }
                total += s * s;
            }
        }
        total
    }

    fn scaled_identity(n: usize) -> Matrix {
        let s = (n as f32).sqrt();
        Matrix::from_fn(n, n, |i, j| if i == j { s } else { 0.0 }).unwrap()
    }

    #[test]
    fn scalar_hessian_reduces_to_rtn() {
        for seed in 0..10 {
            let w = gaussian_matrix(&mut Rng::new(seed), 6, 20);
            let x = scaled_identity(20);
            for bits in [2u8, 3, 4, 8] {
                let g = gptq_quantize(&w, &x, bits, 8).unwrap();
                let r = rtn_quantize(&w, bits, 8).unwrap();
                assert_eq!(g.tensor, r);
            }
        }
    }

    #[test]
    fn single_value_group_is_exact() {
        let w = Matrix::from_rows(&[&[0.7]]).unwrap();
        let x = gaussian_matrix(&mut Rng::new(1), 1, 5);
        let g = gptq_quantize(&w, &x, 2, 128).unwrap();
        assert_eq!(g.tensor.scales(), &[0.0]);
        assert_eq!(dequantize(&g.tensor).unwrap(), w);
        assert_eq!(g.objective, 0.0);
    }

    /// Best objective over every per-row code assignment on the fixed grid.
    fn exhaustive_optimum(w: &Matrix, x: &Matrix, bits: u8) -> f64 {
        let q = rtn_quantize(w, bits, 128).unwrap();
        let levels = 1usize << bits;
        let cols = w.cols();
        let mut total = 0.0;
        for r in 0..w.rows() {
            let (s, z) = (q.scales()[r], q.zeros()[r]);
            let mut best = f64::INFINITY;
            for mut idx in 0..levels.pow(cols as u32) {
                let mut diff = vec![0.0f64; cols];
                for d in diff.iter_mut().enumerate() {
                    let code = idx % levels;
                    idx /= levels;
                    *d.1 = w.get(r, d.0) as f64 - ((z + s * code as f64) as f32) as f64;
                }
                let mut obj = 0.0;
                for c in 0..x.cols() {
                    let v: f64 = (0..cols).map(|k| diff[k] * x.get(k, c) as f64).sum();
                    obj += v * v;
                }
                best = best.min(obj);
            }
            total += best;
        }
        total
    }

    #[test]
    fn near_optimal_on_tiny_instances() {
        let mut wins = 0;
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let w = gaussian_matrix(&mut rng, 2, 4);
            let x = gaussian_matrix(&mut rng, 4, 8);
            let g = gptq_quantize(&w, &x, 2, 128).unwrap();
            let rtn = rtn_quantize(&w, 2, 128).unwrap();
            let rtn_obj = objective_oracle(&w, &dequantize(&rtn).unwrap(), &x);
            let opt = exhaustive_optimum(&w, &x, 2);
            let obj = objective_oracle(&w, &dequantize(&g.tensor).unwrap(), &x);
            assert!((obj - g.objective).abs() <= 1e-9 * (1.0 + obj));
            assert!(obj <= 2.0 * opt + 1e-12, "seed {seed}: {obj} vs opt {opt}");
            assert!(opt <= obj + 1e-12);
            if obj <= rtn_obj + 1e-12 {
                wins += 1;
            }
        }
        assert!(wins >= 9, "gptq beat rtn on only {wins}/10");
    }

    #[test]
    fn usually_beats_rtn_on_gaussian_instances() {
        let mut wins = 0;
        for seed in 0..100 {
            let mut rng = Rng::new(1000 + seed);
            let w = gaussian_matrix(&mut rng, 8, 64);
            let x = gaussian_matrix(&mut rng, 64, 128);
            let g = gptq_quantize(&w, &x, 3, 128).unwrap();
            let rtn = rtn_quantize(&w, 3, 128).unwrap();
            let rtn_obj = output_error(&w, &rtn, &x).unwrap();
            if g.objective <= rtn_obj {
                wins += 1;
            }
        }
        assert!(wins >= 95, "gptq beat rtn on {wins}/100");
    }

    #[test]
    fn zero_calibration_falls_back_to_rtn() {
        let w = gaussian_matrix(&mut Rng::new(3), 3, 10);
        let x = Matrix::zeros(10, 4).unwrap();
        let g = gptq_quantize(&w, &x, 3, 4).unwrap();
        assert_eq!(g.tensor, rtn_quantize(&w, 3, 4).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let w = Matrix::zeros(2, 3).unwrap();
        let x = Matrix::zeros(4, 2).unwrap();
        assert_eq!(gptq_quantize(&w, &x, 2, 128).unwrap_err().code(), "DIMENSION_MISMATCH");
    }
}
