//! Singular value decomposition via one-sided (Hestenes) Jacobi rotations,
//! plus the singular-value soft-thresholding operator built on it.
//!
//! One-sided Jacobi keeps the whole computation in plain loops over the
//! matrix columns, which makes the result deterministic down to the bit for
//! identical input, and it is accurate enough for the small parameter
//! matrices this crate works with (at most a few thousand rows/columns).

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

use super::matrix::Matrix;

/// Thin SVD `A = U * diag(s) * Vt` with `r = min(rows, cols)`.
///
/// Invariants guaranteed by [`svd`]:
/// - `singular_values` is nonincreasing and nonnegative, length `r`;
/// - `u` is `m x r` with orthonormal columns, `vt` is `r x n` with
///   orthonormal rows;
/// - in each column of `u` the entry of largest magnitude is nonnegative
///   (ties resolved to the lowest row index), so the factorization is
///   reproducible across runs and serializations.
#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Real> SvdResult<T> {
    /// Multiply the factors back together.
    pub fn reconstruct(&self) -> Matrix<T> {
        reconstruct(&self.u, &self.singular_values, &self.vt)
    }
}

fn reconstruct<T: Real>(u: &Matrix<T>, sigma: &[T], vt: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(u.rows(), vt.cols());
    for k in 0..sigma.len() {
        let s = sigma[k];
        if s == T::zero() {
            continue;
        }
        for i in 0..u.rows() {
            let scale = s * u[(i, k)];
            let dst = out.row_mut(i);
            let src = vt.row(k);
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += scale * v;
            }
        }
    }
    out
}

/// Compute the thin SVD of `a`.
///
/// Rejects non-finite input with the flat index of the offending entry.
/// Deterministic: identical input bits give identical output bits.
pub fn svd<T: Real>(a: &Matrix<T>) -> Result<SvdResult<T>> {
    a.check_finite("svd input")?;
    if a.rows() >= a.cols() {
        let (u, sigma, v) = jacobi_tall(a);
        finalize(u, sigma, v.transpose())
    } else {
        // Decompose the transpose and swap factors: A^T = U' S V'^T means
        // A = V' S U'^T.
        let at = a.transpose();
        let (u2, sigma, v2) = jacobi_tall(&at);
        finalize(v2, sigma, u2.transpose())
    }
}

/// One-sided Jacobi on a tall (or square) matrix. Returns unsorted,
/// unnormalized-by-convention factors: `work` columns scaled to unit norm
/// as U, singular values, and the accumulated right rotations V.
fn jacobi_tall<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Vec<T>, Matrix<T>) {
    let m = a.rows();
    let n = a.cols();
    let mut work = a.clone();
    let mut v = Matrix::<T>::identity(n);

    let tol = T::epsilon();
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..m {
                    let wp = work[(i, p)];
                    let wq = work[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (real::<T>(2.0) * gamma);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = work[(i, p)];
                    let wq = work[(i, q)];
                    work[(i, p)] = c * wp - s * wq;
                    work[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = vec![T::zero(); n];
    let mut u = Matrix::zeros(m, n);
    for j in 0..n {
        let mut norm_sq = T::zero();
        for i in 0..m {
            norm_sq += work[(i, j)] * work[(i, j)];
        }
        let norm = norm_sq.sqrt();
        sigma[j] = norm;
        if norm > T::zero() {
            for i in 0..m {
                u[(i, j)] = work[(i, j)] / norm;
            }
        }
    }
    (u, sigma, v)
}

/// Sort descending, complete zero columns of U to an orthonormal basis and
/// apply the sign convention.
fn finalize<T: Real>(u: Matrix<T>, sigma: Vec<T>, vt: Matrix<T>) -> Result<SvdResult<T>> {
    let r = sigma.len();
    let m = u.rows();
    let n = vt.cols();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let mut su = Matrix::zeros(m, r);
    let mut svt = Matrix::zeros(r, n);
    let mut ss = vec![T::zero(); r];
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = sigma[src];
        for i in 0..m {
            su[(i, dst)] = u[(i, src)];
        }
        svt.row_mut(dst).copy_from_slice(vt.row(src));
    }

    complete_zero_columns(&mut su, &ss);
    complete_zero_rows(&mut svt, &ss);

    // Sign convention: largest-magnitude entry of each U column nonnegative,
    // ties broken by lowest row index.
    for j in 0..r {
        let mut best = 0;
        for i in 1..m {
            if su[(i, j)].abs() > su[(best, j)].abs() {
                best = i;
            }
        }
        if su[(best, j)] < T::zero() {
            for i in 0..m {
                su[(i, j)] = -su[(i, j)];
            }
            for k in 0..n {
                svt[(j, k)] = -svt[(j, k)];
            }
        }
    }

    Ok(SvdResult {
        u: su,
        singular_values: ss,
        vt: svt,
    })
}

/// Columns belonging to exactly-zero singular values come out of the Jacobi
/// loop as zero vectors; replace them by a deterministic orthonormal
/// completion so U always has orthonormal columns.
fn complete_zero_columns<T: Real>(u: &mut Matrix<T>, sigma: &[T]) {
    let m = u.rows();
    for j in 0..sigma.len() {
        if sigma[j] != T::zero() {
            continue;
        }
        let mut is_zero = true;
        for i in 0..m {
            if u[(i, j)] != T::zero() {
                is_zero = false;
                break;
            }
        }
        if !is_zero {
            continue;
        }
        // Pick the canonical basis vector with the largest residual after
        // projecting out all other columns; lowest index wins ties.
        let mut best_k = 0;
        let mut best_norm = -T::one();
        for k in 0..m {
            let w = residual_of_basis_vector(u, sigma.len(), j, k);
            let norm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > best_norm {
                best_norm = norm;
                best_k = k;
            }
        }
        let mut w = residual_of_basis_vector(u, sigma.len(), j, best_k);
        // One re-orthogonalization pass tightens the result to working
        // precision.
        for pass in 0..2 {
            if pass == 1 {
                w = residual_of_vector(u, sigma.len(), j, &w);
            }
            let norm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
            for x in w.iter_mut() {
                *x = *x / norm;
            }
        }
        for i in 0..m {
            u[(i, j)] = w[i];
        }
    }
}

fn residual_of_basis_vector<T: Real>(
    u: &Matrix<T>,
    r: usize,
    skip: usize,
    k: usize,
) -> Vec<T> {
    let m = u.rows();
    let mut w = vec![T::zero(); m];
    w[k] = T::one();
    residual_of_vector(u, r, skip, &w)
}

fn residual_of_vector<T: Real>(u: &Matrix<T>, r: usize, skip: usize, w: &[T]) -> Vec<T> {
    let m = u.rows();
    let mut out = w.to_vec();
    for c in 0..r {
        if c == skip {
            continue;
        }
        let mut dot = T::zero();
        for i in 0..m {
            dot += u[(i, c)] * out[i];
        }
        if dot != T::zero() {
            for i in 0..m {
                out[i] = out[i] - dot * u[(i, c)];
            }
        }
    }
    out
}

/// Same completion for the rows of Vt.
fn complete_zero_rows<T: Real>(vt: &mut Matrix<T>, sigma: &[T]) {
    let mut t = vt.transpose();
    complete_zero_columns(&mut t, sigma);
    *vt = t.transpose();
}

/// Soft-threshold the singular values of `a`: returns
/// `U * diag(max(s_j - threshold, 0)) * Vt`.
///
/// The result has rank at most `rank(a)` and is the exact zero matrix when
/// `threshold >= s_1`.
pub fn svt<T: Real>(a: &Matrix<T>, threshold: T) -> Result<Matrix<T>> {
    if threshold < T::zero() || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "svt threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    let dec = svd(a)?;
    let shrunk: Vec<T> = dec
        .singular_values
        .iter()
        .map(|&s| (s - threshold).max(T::zero()))
        .collect();
    Ok(reconstruct(&dec.u, &shrunk, &dec.vt))
}

/// Sum of singular values.
pub fn nuclear_norm<T: Real>(a: &Matrix<T>) -> Result<T> {
    Ok(svd(a)?.singular_values.iter().copied().sum())
}

/// Number of singular values strictly above `rel_tol * s_1`.
///
/// Returns 0 for the zero matrix. `rel_tol` must lie in (0, 1).
pub fn effective_rank<T: Real>(a: &Matrix<T>, rel_tol: T) -> Result<usize> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "effective_rank rel_tol must be in (0,1), got {rel_tol}"
        )));
    }
    let sigma = svd(a)?.singular_values;
    let s1 = sigma.first().copied().unwrap_or_else(T::zero);
    let cut = rel_tol * s1;
    Ok(sigma.iter().filter(|&&s| s > cut).count())
}
