//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The rotations act on the columns of whichever orientation of the input has
//! fewer columns, so the implicit Gram matrix is `min(rows, cols)` square. All
//! work happens in `f64`; factors are rounded to `f32` storage at the end.

use super::matrix::{shape_str, Matrix};
use crate::error::{Error, Result};

/// Rotation is skipped when `|a·b| <= ORTHO_TOL * |a| * |b|`.
const ORTHO_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 60;

/// Thin SVD factors `A ≈ u · diag(sigma) · vᵀ`, sorted by non-increasing sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows × r`, orthonormal columns.
    pub u: Matrix,
    pub sigma: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> Result<SvdResult> {
        if r == 0 || r > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate rank-{} SVD to {r}",
                self.rank()
            )));
        }
        Ok(SvdResult {
            u: self.u.column_slice(0..r)?,
            sigma: self.sigma[..r].to_vec(),
            v: self.v.column_slice(0..r)?,
        })
    }

    /// `u · diag(sigma) · vᵀ` accumulated in `f64`.
    pub fn reconstruct(&self) -> Matrix {
        let (m, n, r) = (self.u.rows(), self.v.rows(), self.rank());
        let mut out = Vec::with_capacity(m * n);
        let mut acc = vec![0.0f64; n];
        for i in 0..m {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..r {
                let coef = self.u.get(i, k) as f64 * self.sigma[k];
                if coef == 0.0 {
                    continue;
                }
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += coef * self.v.get(j, k) as f64;
                }
            }
            out.extend(acc.iter().map(|&x| x as f32));
        }
        Matrix::new(m, n, out).expect("reconstruction of finite factors is finite")
    }
}

/// Thin SVD keeping the `r_max` largest singular triplets.
///
/// Each column of `u` has its largest-magnitude entry non-negative (first
/// occurrence on ties), with the matching column of `v` flipped alongside.
pub fn thin_svd(a: &Matrix, r_max: usize) -> Result<SvdResult> {
    let (rows, cols) = a.shape();
    if r_max == 0 {
        return Err(Error::InvalidArgument("thin_svd requires r_max >= 1".into()));
    }
    if r_max > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "r_max {r_max} exceeds min dimension of {}",
            shape_str(a.shape())
        )));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("thin_svd input"));
    }

    let transposed = rows < cols;
    let (m, n) = if transposed { (cols, rows) } else { (rows, cols) };
    // work[j] = column j of the m×n working matrix
    let mut work: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..m)
                .map(|i| if transposed { a.get(j, i) } else { a.get(i, j) } as f64)
                .collect()
        })
        .collect();
    let mut right: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&work[p], &work[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, p, q, c, s);
                rotate_pair(&mut right, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = work
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    order.truncate(r_max);

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let mut left: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            let s = norms[j];
            if s > 0.0 && s > sigma_max * f64::EPSILON {
                Some(work[j].iter().map(|x| x / s).collect())
            } else {
                None
            }
        })
        .collect();
    complete_basis(&mut left, m);
    let mut left: Vec<Vec<f64>> = left.into_iter().map(|c| c.expect("basis completed")).collect();
    let mut right: Vec<Vec<f64>> = order.iter().map(|&j| std::mem::take(&mut right[j])).collect();

    // (u, v) of the original orientation
    let (u_cols, v_cols) = if transposed {
        (&mut right, &mut left)
    } else {
        (&mut left, &mut right)
    };
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut best = 0usize;
        for (i, x) in uc.iter().enumerate() {
            if x.abs() > uc[best].abs() {
                best = i;
            }
        }
        if uc[best] < 0.0 {
            uc.iter_mut().for_each(|x| *x = -*x);
            vc.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = columns_to_matrix(u_cols, rows)?;
    let v = columns_to_matrix(v_cols, cols)?;
    Ok(SvdResult { u, sigma, v })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column.
fn complete_basis(cols: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0usize;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < dim {
            let mut w = vec![0.0; dim];
            w[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let d: f64 = other.iter().zip(&w).map(|(a, b)| a * b).sum();
                    w.iter_mut().zip(other).for_each(|(x, o)| *x -= d * o);
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                w.iter_mut().for_each(|x| *x /= norm);
                cols[slot] = Some(w);
                break;
            }
        }
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> Result<Matrix> {
    let r = cols.len();
    Matrix::from_fn(rows, r, |i, j| cols[j][i] as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::{fro_norm, matmul};
    use crate::numerics::rng::{gaussian_matrix, Rng};

    /// Cyclic two-sided Jacobi eigenvalues of a symmetric matrix.
    fn sym_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn gram(a: &Matrix) -> Vec<f64> {
        let n = a.cols();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..a.rows()).map(|k| a.get(k, i) as f64 * a.get(k, j) as f64).sum();
            }
        }
        g
    }

    fn max_ortho_error(m: &Matrix) -> f64 {
        let g = matmul(&m.transpose(), m).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) as f64 - target).abs());
            }
        }
        worst
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let s = thin_svd(&a, 2).unwrap();
        assert_eq!(s.sigma, vec![3.0, 1.0]);
        assert_eq!(s.u, Matrix::identity(2).unwrap());
        assert_eq!(s.v, Matrix::identity(2).unwrap());
    }

    #[test]
    fn rank_one_outer_product() {
        let a = Matrix::from_rows(&[&[3.0, 4.0], &[6.0, 8.0]]).unwrap();
        let s = thin_svd(&a, 2).unwrap();
        let expected = 5.0f64.sqrt() * 5.0;
        assert!((s.sigma[0] - expected).abs() <= 1e-9 * expected);
        assert!(s.sigma[1] <= 1e-6 * s.sigma[0]);
        assert!(max_ortho_error(&s.u) <= 1e-4);
        assert!(max_ortho_error(&s.v) <= 1e-4);
    }

    #[test]
    fn matches_gram_eigen_oracle() {
        let a = gaussian_matrix(&mut Rng::new(11), 8, 6);
        let s = thin_svd(&a, 6).unwrap();
        let ev = sym_eigenvalues(gram(&a), 6);
        for (sv, e) in s.sigma.iter().zip(ev) {
            let oracle = e.max(0.0).sqrt();
            assert!((sv - oracle).abs() <= 1e-5 * oracle, "{sv} vs {oracle}");
        }
    }

    #[test]
    fn wide_input_uses_transpose() {
        let a = gaussian_matrix(&mut Rng::new(12), 5, 9);
        let s = thin_svd(&a, 5).unwrap();
        assert_eq!(s.u.shape(), (5, 5));
        assert_eq!(s.v.shape(), (9, 5));
        let err = fro_norm(&a.sub(&s.reconstruct()).unwrap());
        assert!(err <= 1e-5 * fro_norm(&a));
        let ev = sym_eigenvalues(gram(&a.transpose()), 5);
        for (sv, e) in s.sigma.iter().zip(ev) {
            assert!((sv - e.sqrt()).abs() <= 1e-5 * e.sqrt());
        }
    }

    #[test]
    fn zero_matrix_gets_orthonormal_factors() {
        let a = Matrix::zeros(4, 3).unwrap();
        let s = thin_svd(&a, 3).unwrap();
        assert!(s.sigma.iter().all(|&x| x == 0.0));
        assert!(max_ortho_error(&s.u) <= 1e-6);
        assert!(max_ortho_error(&s.v) <= 1e-6);
    }

    #[test]
    fn sign_convention() {
        let a = gaussian_matrix(&mut Rng::new(13), 7, 4);
        let s = thin_svd(&a, 4).unwrap();
        for j in 0..4 {
            let col = s.u.column(j);
            let mut best = 0;
            for (i, x) in col.iter().enumerate() {
                if x.abs() > col[best].abs() {
                    best = i;
                }
            }
            assert!(col[best] >= 0.0);
        }
    }

    #[test]
    fn argument_errors() {
        let a = Matrix::zeros(3, 3).unwrap();
        assert!(thin_svd(&a, 0).is_err());
        assert!(thin_svd(&a, 4).is_err());
    }

    mod props {
        use super::*;
        use crate::numerics::Rng;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn factorization_invariants(rows in 1usize..=24, cols in 1usize..=24, seed in any::<u64>()) {
                let a = gaussian_matrix(&mut Rng::new(seed), rows, cols);
                let r = rows.min(cols);
                let s = thin_svd(&a, r).unwrap();
                prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(s.sigma.iter().all(|&x| x >= 0.0));
                prop_assert!(max_ortho_error(&s.u) <= 1e-4);
                prop_assert!(max_ortho_error(&s.v) <= 1e-4);
                let norm = fro_norm(&a);
                prop_assert!(fro_norm(&a.sub(&s.reconstruct()).unwrap()) <= 1e-4 * norm);
                // Eckart-Young: truncation error is the tail energy
                for keep in 1..r {
                    let t = s.truncate(keep).unwrap();
                    let direct = fro_norm(&a.sub(&t.reconstruct()).unwrap());
                    let tail = s.sigma[keep..].iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((direct - tail).abs() <= 1e-4 * norm, "keep {} direct {} tail {}", keep, direct, tail);
                }
            }
        }
    }
}
