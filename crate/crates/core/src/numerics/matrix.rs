use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Dense row-major matrix with 32-bit storage.
///
/// Reductions over elements accumulate in `f64`. Every constructor rejects
/// non-finite values, so a `Matrix` in hand is always finite.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list().entries(self.data.iter()).finish()?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f32]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Matrix::new(n_rows, n_cols, rows.concat())
    }

    /// Builds from `f64` values, rounding to storage precision.
    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Matrix::new(rows, cols, data.iter().map(|&v| v as f32).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Square diagonal matrix.
    pub fn diag(values: &[f32]) -> Result<Self> {
        Matrix::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0f32; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Copy of the column range `range`.
    pub fn column_slice(&self, range: Range<usize>) -> Result<Matrix> {
        if range.start >= range.end || range.end > self.cols {
            return Err(Error::InvalidArgument(format!(
                "column range {range:?} invalid for {} columns",
                self.cols
            )));
        }
        let width = range.end - range.start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[range.clone()]);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip_with(&self, other: &Matrix, context: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                left: shape_str(self.shape()),
                right: shape_str(other.shape()),
                context,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, s: f32) -> Result<Matrix> {
        self.map(|v| v * s)
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn shape_str((r, c): (usize, usize)) -> String {
    format!("{r}x{c}")
}

/// Matrix product with `f64` accumulation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            left: shape_str(a.shape()),
            right: shape_str(b.shape()),
            context: "matmul",
        });
    }
    let n = b.cols;
    let mut out = Vec::with_capacity(a.rows * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..a.rows {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let aik = aik as f64;
            for (s, &bkj) in acc.iter_mut().zip(b.row(k)) {
                *s += aik * bkj as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Matrix::new(a.rows, n, out).map_err(|_| Error::NonFinite("matmul"))
}

/// Frobenius norm with `f64` accumulation.
pub fn fro_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{gaussian_matrix, Rng};

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0f64;
                for k in 0..a.cols() {
                    s += a.get(i, k) as f64 * b.get(k, j) as f64;
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let i2 = Matrix::identity(2).unwrap();
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&i2, &m).unwrap(), m);
        assert_eq!(matmul(&m, &i2).unwrap(), m);
    }

    #[test]
    fn dot_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(5);
        let a = gaussian_matrix(&mut rng, 5, 7);
        let b = gaussian_matrix(&mut rng, 7, 3);
        let c = matmul(&a, &b).unwrap();
        for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((*x as f64 - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3).unwrap();
        let b = Matrix::zeros(2, 3).unwrap();
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "{msg}");
        assert_eq!(err.code(), "DIMENSION_MISMATCH");
    }

    #[test]
    fn fro_norm_cases() {
        assert_eq!(fro_norm(&Matrix::zeros(3, 3).unwrap()), 0.0);
        assert_eq!(fro_norm(&Matrix::from_rows(&[&[3.0, 4.0]]).unwrap()), 5.0);
        let m = gaussian_matrix(&mut Rng::new(9), 10, 10);
        let mut naive = 0.0f64;
        for i in 0..10 {
            for j in 0..10 {
                naive += (m.get(i, j) as f64).powi(2);
            }
        }
        let naive = naive.sqrt();
        assert!((fro_norm(&m) - naive).abs() <= 1e-9 * naive);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(Matrix::new(1, 1, vec![f32::NAN]).unwrap_err().code(), "NON_FINITE");
        assert!(Matrix::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn column_slice_and_transpose() {
        let m = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f32).unwrap();
        let s = m.column_slice(1..3).unwrap();
        assert_eq!(s.data(), &[1.0, 2.0, 5.0, 6.0, 9.0, 10.0]);
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.transpose().get(3, 2), 11.0);
    }

    mod props {
        use super::*;
        use crate::numerics::Rng;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn matmul_matches_oracle(m in 1usize..=16, k in 1usize..=16, n in 1usize..=16, seed in any::<u64>()) {
                let mut rng = Rng::new(seed);
                let a = gaussian_matrix(&mut rng, m, k);
                let b = gaussian_matrix(&mut rng, k, n);
                let c = matmul(&a, &b).unwrap();
                for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
                    prop_assert!((*x as f64 - y).abs() <= 1e-5 * (1.0 + y.abs()));
                }
                let eye = Matrix::identity(k).unwrap();
                prop_assert_eq!(matmul(&a, &eye).unwrap(), a.clone());
            }
        }
    }
}
