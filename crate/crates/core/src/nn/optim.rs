//! SGD with momentum and weight decay.
//!
//! Update rule per parameter: `v <- momentum * v + grad + weight_decay * w;
//! w <- w - lr * v`. Biases and batch-norm parameters are exempt from weight
//! decay; batch-norm running statistics are never touched here.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::network::{GradientSet, LayerGrad, Network};
use super::tensor::Tensor4;
use super::Layer;

/// Momentum buffers, shape-congruent with the network parameters.
#[derive(Debug, Clone)]
pub struct MomentumState<T> {
    items: Vec<LayerGrad<T>>,
}

impl<T: Real> MomentumState<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        let items = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => LayerGrad::Conv {
                    weights: Tensor4::zeros(c.weights.dims()),
                    bias: vec![T::zero(); c.bias.len()],
                },
                Layer::Dense(d) => LayerGrad::Dense {
                    weights: Matrix::zeros(d.weights.rows(), d.weights.cols()),
                    bias: vec![T::zero(); d.bias.len()],
                },
                Layer::BatchNorm(bn) => LayerGrad::BatchNorm {
                    gamma: vec![T::zero(); bn.channels()],
                    beta: vec![T::zero(); bn.channels()],
                },
                _ => LayerGrad::None,
            })
            .collect();
        MomentumState { items }
    }
}

/// One optimizer step. Rejects non-finite gradients with the layer index.
pub fn sgd_step<T: Real>(
    net: &mut Network<T>,
    grads: &GradientSet<T>,
    state: &mut MomentumState<T>,
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if !(lr > T::zero()) {
        return Err(Error::InvalidArgument(format!("lr must be positive, got {lr}")));
    }
    if !(momentum >= T::zero() && momentum < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "momentum must be in [0,1), got {momentum}"
        )));
    }
    if !(weight_decay >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "weight_decay must be nonnegative, got {weight_decay}"
        )));
    }
    if grads.items.len() != net.layers.len() || state.items.len() != net.layers.len() {
        return Err(Error::ShapeMismatch {
            context: "sgd_step".into(),
            expected: format!("{} layer entries", net.layers.len()),
            actual: format!("{} grads / {} buffers", grads.items.len(), state.items.len()),
        });
    }

    for (i, layer) in net.layers.iter_mut().enumerate() {
        match (layer, &grads.items[i], &mut state.items[i]) {
            (
                Layer::Conv(conv),
                LayerGrad::Conv { weights: gw, bias: gb },
                LayerGrad::Conv { weights: vw, bias: vb },
            ) => {
                check_finite_slice(gw.data(), i, "conv weights")?;
                check_finite_slice(gb, i, "conv bias")?;
                update(conv.weights.data_mut(), gw.data(), vw.data_mut(), lr, momentum, weight_decay);
                update_no_decay(&mut conv.bias, gb, vb, lr, momentum);
            }
            (
                Layer::Dense(dense),
                LayerGrad::Dense { weights: gw, bias: gb },
                LayerGrad::Dense { weights: vw, bias: vb },
            ) => {
                check_finite_slice(gw.data(), i, "dense weights")?;
                check_finite_slice(gb, i, "dense bias")?;
                update(dense.weights.data_mut(), gw.data(), vw.data_mut(), lr, momentum, weight_decay);
                update_no_decay(&mut dense.bias, gb, vb, lr, momentum);
            }
            (
                Layer::BatchNorm(bn),
                LayerGrad::BatchNorm { gamma: gg, beta: gb },
                LayerGrad::BatchNorm { gamma: vg, beta: vb },
            ) => {
                check_finite_slice(gg, i, "batchnorm gamma")?;
                check_finite_slice(gb, i, "batchnorm beta")?;
                update_no_decay(&mut bn.gamma, gg, vg, lr, momentum);
                update_no_decay(&mut bn.beta, gb, vb, lr, momentum);
            }
            (Layer::Relu | Layer::Flatten, LayerGrad::None, LayerGrad::None) => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    context: format!("sgd_step at layer {i}"),
                    expected: "matching layer/grad/buffer kinds".into(),
                    actual: "mismatched kinds".into(),
                });
            }
        }
    }
    Ok(())
}

fn check_finite_slice<T: Real>(xs: &[T], layer: usize, what: &str) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: format!("gradient of layer {layer} ({what})"),
            index,
        }),
        None => Ok(()),
    }
}

fn update<T: Real>(w: &mut [T], g: &[T], v: &mut [T], lr: T, momentum: T, weight_decay: T) {
    for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *vi = momentum * *vi + gi + weight_decay * *wi;
        *wi -= lr * *vi;
    }
}

fn update_no_decay<T: Real>(w: &mut [T], g: &[T], v: &mut [T], lr: T, momentum: T) {
    for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *vi = momentum * *vi + gi;
        *wi -= lr * *vi;
    }
}
