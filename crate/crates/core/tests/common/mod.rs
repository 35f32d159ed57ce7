//! Independent numeric oracles shared by the integration tests.
//!
//! Nothing in here calls the crate's SVD or prox code: the eigensolver is a
//! classical two-sided cyclic Jacobi on symmetric matrices, and the prox
//! oracles minimize the actual objectives by ADMM built from the standard
//! one-term proximal maps (elementwise and block soft-thresholding, and
//! eigenvalue shrinkage of the symmetric embedding).

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain row-major matrix for oracle math, so the oracles do not reuse the
/// crate's types beyond conversion at the boundary.
#[derive(Clone, Debug)]
pub struct OMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl OMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OMat {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
        }
    }

    pub fn frob(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &OMat) -> OMat {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }
}

/// Gram matrix `A^T A`.
pub fn gram(a: &OMat) -> OMat {
    let mut g = OMat::zeros(a.cols, a.cols);
    for i in 0..a.cols {
        for j in 0..a.cols {
            let mut s = 0.0;
            for r in 0..a.rows {
                s += a.at(r, i) * a.at(r, j);
            }
            *g.at_mut(i, j) = s;
        }
    }
    g
}

/// Two-sided cyclic Jacobi eigensolver for a symmetric matrix. Returns
/// eigenvalues in descending order and the matching eigenvectors as columns.
pub fn sym_eigen(a: &OMat) -> (Vec<f64>, OMat) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = OMat::zeros(n, n);
    for i in 0..n {
        *v.at_mut(i, i) = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q).abs();
            }
        }
        if off < 1e-14 * (1.0 + m.frob()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m.at(i, p);
                    let miq = m.at(i, q);
                    *m.at_mut(i, p) = c * mip - s * miq;
                    *m.at_mut(i, q) = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m.at(p, j);
                    let mqj = m.at(q, j);
                    *m.at_mut(p, j) = c * mpj - s * mqj;
                    *m.at_mut(q, j) = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    *v.at_mut(i, p) = c * vip - s * viq;
                    *v.at_mut(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).partial_cmp(&m.at(i, i)).unwrap());
    let evals: Vec<f64> = order.iter().map(|&i| m.at(i, i)).collect();
    let mut evecs = OMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            *evecs.at_mut(i, dst) = v.at(i, src);
        }
    }
    (evals, evecs)
}

/// Singular values of `a` (descending) through the eigenvalues of `A^T A`.
pub fn singular_values_by_eigensolver(a: &OMat) -> Vec<f64> {
    let (evals, _) = sym_eigen(&gram(a));
    evals.iter().map(|&l| l.max(0.0).sqrt()).collect()
}

/// Nuclear-norm proximal map computed through the symmetric embedding
/// `[[0, M], [M^T, 0]]`: shrink the positive eigenvalues by `thresh` and
/// rebuild. Shares no code with the crate's SVD.
fn nuclear_prox_by_embedding(m: &OMat, thresh: f64) -> OMat {
    let (r, c) = (m.rows, m.cols);
    let n = r + c;
    let mut b = OMat::zeros(n, n);
    for i in 0..r {
        for j in 0..c {
            *b.at_mut(i, r + j) = m.at(i, j);
            *b.at_mut(r + j, i) = m.at(i, j);
        }
    }
    let (evals, evecs) = sym_eigen(&b);
    let mut out = OMat::zeros(r, c);
    for (idx, &lam) in evals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let keep = (lam - thresh).max(0.0);
        if keep == 0.0 {
            continue;
        }
        // Eigenvector w = (u, v)/sqrt(2) with unit u, v; the rank-1 piece of
        // M is lam * u v^T = 2 * lam * w_top w_bot^T.
        for i in 0..r {
            for j in 0..c {
                *out.at_mut(i, j) += 2.0 * keep * evecs.at(i, idx) * evecs.at(r + j, idx);
            }
        }
    }
    out
}

/// Nuclear norm by the eigensolver route (for objective evaluation).
pub fn nuclear_norm_by_eigensolver(m: &OMat) -> f64 {
    singular_values_by_eigensolver(m).iter().sum()
}

/// Objective of the per-layer proximity subproblem in normalized form:
/// `0.5 * ||X - A||_F^2 + t * ||X||_*`.
pub fn nuclear_prox_objective(x: &OMat, a: &OMat, t: f64) -> f64 {
    0.5 * x.sub(a).frob().powi(2) + t * nuclear_norm_by_eigensolver(x)
}

/// Numeric minimizer of `0.5 * ||X - A||_F^2 + t * ||X||_*` by ADMM with the
/// embedding-based nuclear prox as its Z-step.
pub fn minimize_nuclear_prox(a: &OMat, t: f64, iters: usize) -> OMat {
    let beta = 1.0;
    let mut z = a.clone();
    let mut u = OMat::zeros(a.rows, a.cols);
    let mut x = a.clone();
    for _ in 0..iters {
        // x-step: (A + beta * (z - u)) / (1 + beta)
        for i in 0..x.data.len() {
            x.data[i] = (a.data[i] + beta * (z.data[i] - u.data[i])) / (1.0 + beta);
        }
        // z-step: nuclear prox at threshold t / beta of (x + u)
        let mut xu = x.clone();
        for i in 0..xu.data.len() {
            xu.data[i] += u.data[i];
        }
        z = nuclear_prox_by_embedding(&xu, t / beta);
        for i in 0..u.data.len() {
            u.data[i] += x.data[i] - z.data[i];
        }
    }
    z
}

/// Objective of the sparse-group-Lasso proximity subproblem in normalized
/// form: `0.5 * ||x - v||^2 + a * ||x||_1 + b * ||x||_2`.
pub fn sgl_prox_objective(x: &[f64], v: &[f64], a: f64, b: f64) -> f64 {
    let quad: f64 = x.iter().zip(v).map(|(xi, vi)| (xi - vi).powi(2)).sum();
    let l1: f64 = x.iter().map(|xi| xi.abs()).sum();
    let l2: f64 = x.iter().map(|xi| xi * xi).sum::<f64>().sqrt();
    0.5 * quad + a * l1 + b * l2
}

/// Numeric minimizer of `0.5 * ||x - v||^2 + a * ||x||_1 + b * ||x||_2` by
/// two-block ADMM using only the one-term proximal maps, so it is
/// independent of the two-stage closed form under test.
pub fn minimize_sgl_prox(v: &[f64], a: f64, b: f64, iters: usize) -> Vec<f64> {
    let beta = 1.0;
    let n = v.len();
    let mut x = v.to_vec();
    let mut z = v.to_vec();
    let mut u = vec![0.0; n];
    for _ in 0..iters {
        // x-step: prox of (a / (1 + beta)) * ||.||_1 at (v + beta (z - u)) / (1 + beta)
        for i in 0..n {
            let target = (v[i] + beta * (z[i] - u[i])) / (1.0 + beta);
            let thr = a / (1.0 + beta);
            x[i] = soft(target, thr);
        }
        // z-step: prox of (b / beta) * ||.||_2 at x + u (block shrinkage)
        let mut norm = 0.0;
        for i in 0..n {
            z[i] = x[i] + u[i];
            norm += z[i] * z[i];
        }
        norm = norm.sqrt();
        let thr = b / beta;
        if norm <= thr {
            z.iter_mut().for_each(|zi| *zi = 0.0);
        } else {
            let scale = 1.0 - thr / norm;
            z.iter_mut().for_each(|zi| *zi *= scale);
        }
        for i in 0..n {
            u[i] += x[i] - z[i];
        }
    }
    z
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn eigensolver_recovers_diagonal() {
        let mut a = OMat::zeros(3, 3);
        *a.at_mut(0, 0) = 2.0;
        *a.at_mut(1, 1) = -1.0;
        *a.at_mut(2, 2) = 5.0;
        let (evals, _) = sym_eigen(&a);
        assert!((evals[0] - 5.0).abs() < 1e-12);
        assert!((evals[1] - 2.0).abs() < 1e-12);
        assert!((evals[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sgl_oracle_matches_hand_value() {
        // v = (3, -4), pure group term b = sqrt(2): shrink by 1 - sqrt(2)/5.
        let out = minimize_sgl_prox(&[3.0, -4.0], 0.0, 2.0f64.sqrt(), 400);
        assert!((out[0] - 2.15147).abs() < 1e-4, "{out:?}");
        assert!((out[1] + 2.86863).abs() < 1e-4, "{out:?}");
    }

    #[test]
    fn nuclear_oracle_matches_hand_value() {
        // diag(3, 1) with threshold 0.5 -> diag(2.5, 0.5).
        let mut a = OMat::zeros(2, 2);
        *a.at_mut(0, 0) = 3.0;
        *a.at_mut(1, 1) = 1.0;
        let out = minimize_nuclear_prox(&a, 0.5, 200);
        assert!((out.at(0, 0) - 2.5).abs() < 1e-6, "{out:?}");
        assert!((out.at(1, 1) - 0.5).abs() < 1e-6, "{out:?}");
        assert!(out.at(0, 1).abs() < 1e-6);
    }
}
