//! Regularizer evaluation and proximal operators.
//!
//! The penalty combines a nuclear-norm term, which pulls each layer's
//! parameter matrix toward low rank, with a sparse group Lasso term that
//! zeroes whole units (rows of the reshaped matrix) and individual weights.
//! Training alternates an epoch of SGD on the data loss with one application
//! of the proximal operators (incremental proximal descent), so each
//! operator here is the exact closed-form prox of its own term.

use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, svt, Matrix};
use crate::nn::{reshape_kernel_to_matrix, write_matrix_to_kernel, Network};
use crate::scalar::{real_of_usize, Real};

/// Hyper-parameters of the combined regularizer.
///
/// `lambdas` carries one weight per regularized layer, in network order;
/// `prox_lr` is the learning rate the proximal step is tied to (the current
/// scheduled rate, not the initial one).
#[derive(Debug, Clone)]
pub struct RegConfig<T> {
    pub tau: T,
    pub alpha: T,
    pub lambdas: Vec<T>,
    pub prox_lr: T,
}

impl<T: Real> RegConfig<T> {
    pub fn validate(&self, net: &Network<T>) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.tau < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "tau must be nonnegative, got {}",
                self.tau
            )));
        }
        if self.lambdas.iter().any(|&l| l < T::zero()) {
            return Err(Error::InvalidArgument("lambda weights must be nonnegative".into()));
        }
        if !(self.prox_lr > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "prox_lr must be positive, got {}",
                self.prox_lr
            )));
        }
        let regularized = net.layers.iter().filter(|l| l.is_regularized()).count();
        if self.lambdas.len() != regularized {
            return Err(Error::ShapeMismatch {
                context: "RegConfig lambdas".into(),
                expected: format!("{regularized} regularized layers"),
                actual: format!("{} lambda entries", self.lambdas.len()),
            });
        }
        Ok(())
    }
}

/// Total penalty value over the regularized layers:
/// `sum_l [(1-alpha) * lambda_l * sqrt(P_l) * sum_n ||row_n||_2
///        + alpha * lambda_l * ||theta_l||_1]
///  + tau * sum_l ||theta_hat_l||_*`.
pub fn regularizer_value<T: Real>(net: &Network<T>, cfg: &RegConfig<T>) -> Result<T> {
    cfg.validate(net)?;
    let mut total = T::zero();
    let mut lam_it = cfg.lambdas.iter();
    for layer in &net.layers {
        if !layer.is_regularized() {
            continue;
        }
        let lambda = *lam_it.next().expect("validated lambda count");
        let theta = reshape_kernel_to_matrix(layer)?;
        if lambda > T::zero() {
            let sqrt_p = real_of_usize::<T>(theta.cols()).sqrt();
            let mut group_sum = T::zero();
            let mut l1 = T::zero();
            for r in 0..theta.rows() {
                let row = theta.row(r);
                group_sum += row.iter().map(|&x| x * x).sum::<T>().sqrt();
                l1 += row.iter().map(|&x| x.abs()).sum::<T>();
            }
            total += (T::one() - cfg.alpha) * lambda * sqrt_p * group_sum + cfg.alpha * lambda * l1;
        }
        if cfg.tau > T::zero() {
            total += cfg.tau * nuclear_norm(&theta)?;
        }
    }
    Ok(total)
}

/// Proximal operator of `tau * ||.||_*` at step size `rho`: soft-thresholds
/// the singular values by `rho * tau`.
pub fn prox_nuclear_layer<T: Real>(theta_hat: &Matrix<T>, rho: T, tau: T) -> Result<Matrix<T>> {
    if !(rho > T::zero()) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if tau < T::zero() {
        return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
    }
    if tau == T::zero() {
        return Ok(theta_hat.clone());
    }
    svt(theta_hat, rho * tau)
}

/// Closed-form proximal operator of the sparse group Lasso penalty
/// `alpha * lambda * ||x||_1 + (1-alpha) * lambda * sqrt(P) * ||x||_2`
/// for one unit's parameter vector, at step size `rho`.
///
/// Two stages: elementwise soft-threshold by `rho * alpha * lambda`, then
/// shrink the surviving vector toward zero by the group threshold
/// `rho * (1-alpha) * lambda * sqrt(P)`, zeroing it entirely when its norm
/// falls below that threshold.
pub fn prox_sparse_group_lasso<T: Real>(
    theta_row: &[T],
    rho: T,
    lambda: T,
    alpha: T,
) -> Result<Vec<T>> {
    if !(rho > T::zero()) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if lambda < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0,1], got {alpha}")));
    }
    if lambda == T::zero() {
        return Ok(theta_row.to_vec());
    }
    let p = real_of_usize::<T>(theta_row.len()).sqrt();
    let elem_thresh = rho * alpha * lambda;
    let group_thresh = rho * (T::one() - alpha) * lambda * p;

    let soft: Vec<T> = theta_row
        .iter()
        .map(|&x| {
            let mag = x.abs() - elem_thresh;
            if mag > T::zero() {
                x.signum() * mag
            } else {
                T::zero()
            }
        })
        .collect();
    let norm = soft.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm <= group_thresh {
        return Ok(vec![T::zero(); theta_row.len()]);
    }
    let scale = T::one() - group_thresh / norm;
    Ok(soft.into_iter().map(|x| x * scale).collect())
}

/// Apply the proximal operators to every regularized layer, once per epoch
/// after its SGD steps. Order within a layer is fixed: sparse group Lasso on
/// each unit row first, then the nuclear-norm prox, so that zeroed units are
/// visible to the singular-value thresholding.
pub fn apply_prox_schedule<T: Real>(net: &mut Network<T>, cfg: &RegConfig<T>) -> Result<()> {
    cfg.validate(net)?;
    let mut lam_it = cfg.lambdas.iter();
    for layer in net.layers.iter_mut() {
        if !layer.is_regularized() {
            continue;
        }
        let lambda = *lam_it.next().expect("validated lambda count");
        if lambda == T::zero() && cfg.tau == T::zero() {
            continue;
        }
        let mut theta = reshape_kernel_to_matrix(layer)?;
        if lambda > T::zero() {
            for r in 0..theta.rows() {
                let shrunk = prox_sparse_group_lasso(theta.row(r), cfg.prox_lr, lambda, cfg.alpha)?;
                theta.row_mut(r).copy_from_slice(&shrunk);
            }
        }
        if cfg.tau > T::zero() {
            theta = prox_nuclear_layer(&theta, cfg.prox_lr, cfg.tau)?;
        }
        write_matrix_to_kernel(layer, &theta)?;
    }
    Ok(())
}
