//! Small dense `f64` kernels on row-major square buffers.

use super::matrix::Matrix;
use super::rng::{gaussian_matrix, Rng};
use crate::error::Result;

/// Lower Cholesky factor `L` with `A = L Lᵀ`; `None` if `A` is not positive definite.
pub fn cholesky_lower(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky_lower(a, n)?;
    // invert L (lower triangular) column by column
    let mut linv = vec![0.0f64; n * n];
    for col in 0..n {
        linv[col * n + col] = 1.0 / l[col * n + col];
        for i in col + 1..n {
            let mut s = 0.0;
            for k in col..i {
                s -= l[i * n + k] * linv[k * n + col];
            }
            linv[i * n + col] = s / l[i * n + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    if inv.iter().all(|v| v.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Upper Cholesky factor `U` with `A = Uᵀ U`.
pub fn cholesky_upper(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky_lower(a, n)?;
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            u[j * n + i] = l[i * n + j];
        }
    }
    Some(u)
}

/// `rows × k` matrix with orthonormal columns: modified Gram-Schmidt (two
/// passes) over Gaussian columns.
pub fn random_orthonormal(rng: &mut Rng, rows: usize, k: usize) -> Result<Matrix> {
    assert!(k <= rows, "cannot fit {k} orthonormal columns in dimension {rows}");
    let g = gaussian_matrix(rng, k, rows);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut w: Vec<f64> = g.row(j).iter().map(|&x| x as f64).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= norm);
        basis.push(w);
    }
    Matrix::from_fn(rows, k, |i, j| basis[j][i] as f32)
}
