//! Dense matrices, thin SVD, small factorizations, and deterministic RNG.

pub mod half_ext;
pub mod linalg;
mod matrix;
pub mod rng;
mod svd;

pub(crate) use matrix::shape_str as matrix_shape_str;
pub use matrix::{fro_norm, matmul, Matrix};
pub use rng::{fnv1a64, gaussian_matrix, Fnv1a64, Rng};
pub use svd::{thin_svd, SvdResult};
