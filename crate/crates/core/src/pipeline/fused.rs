//! `Δ̂·x` computed as `Û·(Σ·(V̂ᵀ·x))` straight from the stored factors.
//!
//! Factor rows are decoded one at a time into buffers of length `h_in` or
//! the group width, so the dense `h_out × h_in` delta never exists.

use super::CompressedMatrix;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn check_len(cm: &CompressedMatrix, len: usize) -> Result<()> {
    if len != cm.h_in() {
        return Err(Error::DimensionMismatch {
            left: format!("{}x{}", cm.h_out(), cm.h_in()),
            right: format!("{len}"),
            context: "fused apply: input length must equal h_in",
        });
    }
    Ok(())
}

/// `base·x + Δ̂·x` (or just `Δ̂·x` without a base weight).
pub fn fused_apply(cm: &CompressedMatrix, x: &[f32], base: Option<&Matrix>) -> Result<Vec<f32>> {
    check_len(cm, x.len())?;
    if let Some(b) = base {
        if b.shape() != (cm.h_out(), cm.h_in()) {
            return Err(Error::DimensionMismatch {
                left: format!("{}x{}", cm.h_out(), cm.h_in()),
                right: format!("{}x{}", b.rows(), b.cols()),
                context: "fused apply: base weight shape",
            });
        }
    }
    let mut y = vec![0.0f64; cm.h_out()];
    let mut row = vec![0.0f32; cm.h_in()];
    let mut t = Vec::new();
    for g in cm.groups() {
        let sig = &cm.sigma()[g.r_begin..g.r_end];
        t.clear();
        for (r, &s) in sig.iter().enumerate() {
            g.vt.decode_row(r, &mut row);
            let dot: f64 = row.iter().zip(x).map(|(&v, &xi)| v as f64 * xi as f64).sum();
            t.push(dot * s as f64);
        }
        let mut urow = vec![0.0f32; g.width()];
        for (i, yi) in y.iter_mut().enumerate() {
            g.u.decode_row(i, &mut urow);
            *yi += urow.iter().zip(&t).map(|(&u, &tr)| u as f64 * tr).sum::<f64>();
        }
    }
    if let Some(b) = base {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += b
                .row(i)
                .iter()
                .zip(x)
                .map(|(&w, &xi)| w as f64 * xi as f64)
                .sum::<f64>();
        }
    }
    Ok(y.into_iter().map(|v| v as f32).collect())
}

/// Column-batched variant: `x` is `h_in × batch`, result `h_out × batch`.
/// Each factor row is decoded once per call.
pub fn fused_apply_batch(cm: &CompressedMatrix, x: &Matrix, base: Option<&Matrix>) -> Result<Matrix> {
    check_len(cm, x.rows())?;
    let b = x.cols();
    let mut y = vec![0.0f64; cm.h_out() * b];
    let mut row = vec![0.0f32; cm.h_in()];
    let mut t = Vec::new();
    for g in cm.groups() {
        let sig = &cm.sigma()[g.r_begin..g.r_end];
        // t = diag(σ) · V̂ᵀ · X, width × batch
        t.clear();
        t.resize(g.width() * b, 0.0f64);
        for (r, &s) in sig.iter().enumerate() {
            g.vt.decode_row(r, &mut row);
            let tr = &mut t[r * b..(r + 1) * b];
            for (k, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (acc, &xv) in tr.iter_mut().zip(x.row(k)) {
                    *acc += v as f64 * xv as f64;
                }
            }
            tr.iter_mut().for_each(|a| *a *= s as f64);
        }
        let mut urow = vec![0.0f32; g.width()];
        for (i, yi) in y.chunks_mut(b).enumerate() {
            g.u.decode_row(i, &mut urow);
            for (r, &u) in urow.iter().enumerate() {
                if u == 0.0 {
                    continue;
                }
                for (acc, &tv) in yi.iter_mut().zip(&t[r * b..(r + 1) * b]) {
                    *acc += u as f64 * tv;
                }
            }
        }
    }
    if let Some(base) = base {
        if base.shape() != (cm.h_out(), cm.h_in()) {
            return Err(Error::DimensionMismatch {
                left: format!("{}x{}", cm.h_out(), cm.h_in()),
                right: format!("{}x{}", base.rows(), base.cols()),
                context: "fused apply: base weight shape",
            });
        }
        for (i, yi) in y.chunks_mut(b).enumerate() {
            for (k, &w) in base.row(i).iter().enumerate() {
                for (acc, &xv) in yi.iter_mut().zip(x.row(k)) {
                    *acc += w as f64 * xv as f64;
                }
            }
        }
    }
    Matrix::from_f64(cm.h_out(), b, &y)
}
