//! Dense linear algebra kernels: matrices, SVD, singular-value
//! soft-thresholding and the norms the regularizers are built from.

mod matrix;
mod svd;

pub use matrix::Matrix;
pub use svd::{effective_rank, nuclear_norm, svd, svt, SvdResult};

use crate::scalar::Real;

/// Square root of the sum of squared entries.
pub fn frobenius_norm<T: Real>(a: &Matrix<T>) -> T {
    a.frobenius_norm()
}
