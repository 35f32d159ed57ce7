//! Network container and the hand-written forward/backward passes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{real_of_usize, Real};

use super::layer::{BatchNormLayer, ConvLayer, DenseLayer, Layer};
use super::tensor::Tensor4;

/// Ordered stack of layers applied to `(batch, C, H, W)` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    /// `(C, H, W)` of a single sample.
    pub input_shape: (usize, usize, usize),
}

/// Per-layer gradients, shape-congruent with the network's parameters.
#[derive(Debug, Clone)]
pub enum LayerGrad<T> {
    Conv { weights: Tensor4<T>, bias: Vec<T> },
    Dense { weights: Matrix<T>, bias: Vec<T> },
    BatchNorm { gamma: Vec<T>, beta: Vec<T> },
    None,
}

/// Gradient blocks for every layer, in network order.
#[derive(Debug, Clone)]
pub struct GradientSet<T> {
    pub items: Vec<LayerGrad<T>>,
}

/// Activation record produced by a train-mode forward pass and consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    classes: usize,
    items: Vec<LayerCache<T>>,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv { input: Tensor4<T> },
    Dense { input: Tensor4<T> },
    BatchNorm { input: Tensor4<T>, mean: Vec<T>, var: Vec<T> },
    Relu { input: Tensor4<T> },
    Flatten { in_dims: [usize; 4] },
}

impl<T: Real> Network<T> {
    /// Build and validate the shape chain once.
    pub fn new(input_shape: (usize, usize, usize), layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Network {
            layers,
            input_shape,
        };
        net.shapes()?;
        Ok(net)
    }

    /// Shapes at every layer boundary: `shapes()[0]` is the input shape,
    /// `shapes()[i + 1]` the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input_shape;
        out.push(cur);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.output_shape(cur).map_err(|e| match e {
                Error::ShapeMismatch {
                    context,
                    expected,
                    actual,
                } => Error::ShapeMismatch {
                    context: format!("layer {i} ({}): {context}", layer.kind_name()),
                    expected,
                    actual,
                },
                other => other,
            })?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Flattened size of the final activation (the class count for a
    /// classifier head).
    pub fn output_size(&self) -> Result<usize> {
        let (c, h, w) = *self.shapes()?.last().expect("shapes is never empty");
        Ok(c * h * w)
    }

    /// Train-mode forward: batch normalization uses batch statistics and
    /// blends them into the running estimates. Requires batch size >= 2
    /// whenever the network contains a batch-norm layer.
    pub fn forward_train(&mut self, batch: &Tensor4<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let n = batch.dims()[0];
        let mut items = Vec::with_capacity(self.layers.len());
        let mut act = batch.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            act = match layer {
                Layer::Conv(conv) => {
                    let out = conv_forward(conv, &act).map_err(|e| at_layer(i, "conv2d", e))?;
                    items.push(LayerCache::Conv { input: act });
                    out
                }
                Layer::Dense(dense) => {
                    let out = dense_forward(dense, &act).map_err(|e| at_layer(i, "dense", e))?;
                    items.push(LayerCache::Dense { input: act });
                    out
                }
                Layer::BatchNorm(bn) => {
                    if n < 2 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: batchnorm in train mode requires batch size >= 2, got {n}"
                        )));
                    }
                    let (out, mean, var) =
                        bn_forward_train(bn, &act).map_err(|e| at_layer(i, "batchnorm", e))?;
                    items.push(LayerCache::BatchNorm {
                        input: act,
                        mean,
                        var,
                    });
                    out
                }
                Layer::Relu => {
                    let out = relu_forward(&act);
                    items.push(LayerCache::Relu { input: act });
                    out
                }
                Layer::Flatten => {
                    let d = act.dims();
                    let out = act.reshaped([d[0], d[1] * d[2] * d[3], 1, 1])?;
                    items.push(LayerCache::Flatten { in_dims: d });
                    out
                }
            };
        }
        let logits = activation_to_logits(&act);
        let classes = logits.cols();
        Ok((
            logits,
            ForwardCache {
                batch: n,
                classes,
                items,
            },
        ))
    }

    /// Eval-mode forward: read-only, batch normalization uses running
    /// statistics. Deterministic for identical inputs and parameters.
    pub fn forward_eval(&self, batch: &Tensor4<T>) -> Result<Matrix<T>> {
        self.check_batch(batch)?;
        let mut act = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            act = match layer {
                Layer::Conv(conv) => {
                    conv_forward(conv, &act).map_err(|e| at_layer(i, "conv2d", e))?
                }
                Layer::Dense(dense) => {
                    dense_forward(dense, &act).map_err(|e| at_layer(i, "dense", e))?
                }
                Layer::BatchNorm(bn) => {
                    bn_forward_eval(bn, &act).map_err(|e| at_layer(i, "batchnorm", e))?
                }
                Layer::Relu => relu_forward(&act),
                Layer::Flatten => {
                    let d = act.dims();
                    act.reshaped([d[0], d[1] * d[2] * d[3], 1, 1])?
                }
            };
        }
        Ok(activation_to_logits(&act))
    }

    /// Backpropagate `dlogits` through the cache of the immediately
    /// preceding train-mode forward.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Matrix<T>) -> Result<GradientSet<T>> {
        if cache.items.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                context: "backward cache".into(),
                expected: format!("{} layer records", self.layers.len()),
                actual: format!("{}", cache.items.len()),
            });
        }
        if dlogits.rows() != cache.batch || dlogits.cols() != cache.classes {
            return Err(Error::ShapeMismatch {
                context: "backward dlogits".into(),
                expected: format!("{}x{}", cache.batch, cache.classes),
                actual: format!("{}x{}", dlogits.rows(), dlogits.cols()),
            });
        }
        let mut grads = vec![LayerGrad::None; self.layers.len()];
        let mut dout =
            Tensor4::from_vec([cache.batch, cache.classes, 1, 1], dlogits.data().to_vec())?;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let item = &cache.items[i];
            let (din, grad) = match (layer, item) {
                (Layer::Conv(conv), LayerCache::Conv { input }) => {
                    let (din, dw, db) = conv_backward(conv, input, &dout)
                        .map_err(|e| at_layer(i, "conv2d", e))?;
                    (din, LayerGrad::Conv { weights: dw, bias: db })
                }
                (Layer::Dense(dense), LayerCache::Dense { input }) => {
                    let (din, dw, db) = dense_backward(dense, input, &dout)
                        .map_err(|e| at_layer(i, "dense", e))?;
                    (din, LayerGrad::Dense { weights: dw, bias: db })
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm { input, mean, var }) => {
                    let (din, dgamma, dbeta) = bn_backward(bn, input, mean, var, &dout);
                    (
                        din,
                        LayerGrad::BatchNorm {
                            gamma: dgamma,
                            beta: dbeta,
                        },
                    )
                }
                (Layer::Relu, LayerCache::Relu { input }) => {
                    (relu_backward(input, &dout), LayerGrad::None)
                }
                (Layer::Flatten, LayerCache::Flatten { in_dims }) => {
                    (dout.reshaped(*in_dims)?, LayerGrad::None)
                }
                _ => {
                    return Err(Error::ShapeMismatch {
                        context: format!("backward cache at layer {i}"),
                        expected: self.layers[i].kind_name().into(),
                        actual: "cache record of a different kind".into(),
                    });
                }
            };
            grads[i] = grad;
            dout = din;
        }
        Ok(GradientSet { items: grads })
    }

    fn check_batch(&self, batch: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = batch.dims();
        if (c, h, w) != self.input_shape {
            return Err(Error::ShapeMismatch {
                context: "network input".into(),
                expected: format!("{:?}", self.input_shape),
                actual: format!("({c}, {h}, {w})"),
            });
        }
        Ok(())
    }
}

fn at_layer(i: usize, kind: &str, e: Error) -> Error {
    match e {
        Error::ShapeMismatch {
            context,
            expected,
            actual,
        } => Error::ShapeMismatch {
            context: format!("layer {i} ({kind}): {context}"),
            expected,
            actual,
        },
        other => other,
    }
}

fn activation_to_logits<T: Real>(act: &Tensor4<T>) -> Matrix<T> {
    let d = act.dims();
    Matrix::from_vec(d[0], d[1] * d[2] * d[3], act.data().to_vec())
        .expect("activation data length matches its dims")
}

/// For an output row index and kernel column, the valid output-column range
/// `[lo, hi)` such that `ix = ox * stride - pad + kx` stays inside `[0, w)`.
#[inline]
fn valid_ox_range(ow: usize, stride: usize, pad: usize, kx: usize, w: usize) -> (usize, usize) {
    // ox*stride + kx >= pad  and  ox*stride + kx < w + pad
    let lo = pad.saturating_sub(kx).div_ceil(stride);
    let hi = ((w + pad).saturating_sub(kx).saturating_sub(1) / stride + 1).min(ow);
    (lo.min(hi), hi)
}

fn conv_forward<T: Real>(conv: &ConvLayer<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input.dims();
    let [k, wc, dh, dw] = conv.weights.dims();
    if wc != c {
        return Err(Error::ShapeMismatch {
            context: "conv input channels".into(),
            expected: format!("{wc}"),
            actual: format!("{c}"),
        });
    }
    let (_, oh, ow) = Layer::Conv(conv.clone()).output_shape((c, h, w))?;
    let mut out = Tensor4::zeros([n, k, oh, ow]);
    let stride = conv.stride;
    let weights = conv.weights.data();
    let kernel = c * dh * dw;

    for b in 0..n {
        for ko in 0..k {
            let bias = conv.bias.get(ko).copied().unwrap_or_else(T::zero);
            let out_base = out.offset(b, ko, 0, 0);
            for x in &mut out.data_mut()[out_base..out_base + oh * ow] {
                *x = bias;
            }
            for ci in 0..c {
                let w_base = ko * kernel + ci * dh * dw;
                let in_base = input.offset(b, ci, 0, 0);
                for ky in 0..dh {
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - conv.pad_h as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = &input.data()
                            [in_base + iy as usize * w..in_base + (iy as usize + 1) * w];
                        let out_start = out_base + oy * ow;
                        for kx in 0..dw {
                            let wv = weights[w_base + ky * dw + kx];
                            if wv == T::zero() {
                                continue;
                            }
                            let (lo, hi) = valid_ox_range(ow, stride, conv.pad_w, kx, w);
                            let out_row = &mut out.data_mut()[out_start + lo..out_start + hi];
                            if stride == 1 {
                                let off = (lo + kx) as isize - conv.pad_w as isize;
                                let src = &in_row[off as usize..off as usize + (hi - lo)];
                                for (o, &x) in out_row.iter_mut().zip(src) {
                                    *o += wv * x;
                                }
                            } else {
                                for (j, o) in out_row.iter_mut().enumerate() {
                                    let ix = (lo + j) * stride + kx - conv.pad_w;
                                    *o += wv * in_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv_backward<T: Real>(
    conv: &ConvLayer<T>,
    input: &Tensor4<T>,
    dout: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>, Vec<T>)> {
    let [n, c, h, w] = input.dims();
    let [k, _, dh, dw] = conv.weights.dims();
    let [dn, dk, oh, ow] = dout.dims();
    if dn != n || dk != k {
        return Err(Error::ShapeMismatch {
            context: "conv upstream gradient".into(),
            expected: format!("batch {n}, channels {k}"),
            actual: format!("batch {dn}, channels {dk}"),
        });
    }
    let mut din = Tensor4::zeros([n, c, h, w]);
    let mut dweights = Tensor4::zeros(conv.weights.dims());
    let mut dbias = vec![T::zero(); conv.bias.len()];
    let stride = conv.stride;
    let kernel = c * dh * dw;

    for b in 0..n {
        for ko in 0..k {
            let g_base = dout.offset(b, ko, 0, 0);
            if let Some(db) = dbias.get_mut(ko) {
                for &g in &dout.data()[g_base..g_base + oh * ow] {
                    *db += g;
                }
            }
            for ci in 0..c {
                let w_base = ko * kernel + ci * dh * dw;
                let in_base = input.offset(b, ci, 0, 0);
                for ky in 0..dh {
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - conv.pad_h as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let g_row = &dout.data()[g_base + oy * ow..g_base + (oy + 1) * ow];
                        for kx in 0..dw {
                            let (lo, hi) = valid_ox_range(ow, stride, conv.pad_w, kx, w);
                            if lo >= hi {
                                continue;
                            }
                            let wv = conv.weights.data()[w_base + ky * dw + kx];
                            let mut dw_acc = T::zero();
                            if stride == 1 {
                                let off = lo + kx - conv.pad_w;
                                let in_row =
                                    &input.data()[in_base + iy * w + off..in_base + iy * w + off + (hi - lo)];
                                let din_row = &mut din.data_mut()
                                    [in_base + iy * w + off..in_base + iy * w + off + (hi - lo)];
                                for ((&g, &x), d) in
                                    g_row[lo..hi].iter().zip(in_row).zip(din_row.iter_mut())
                                {
                                    dw_acc += g * x;
                                    *d += wv * g;
                                }
                            } else {
                                for (j, &g) in g_row[lo..hi].iter().enumerate() {
                                    let ix = (lo + j) * stride + kx - conv.pad_w;
                                    dw_acc += g * input.data()[in_base + iy * w + ix];
                                    din.data_mut()[in_base + iy * w + ix] += wv * g;
                                }
                            }
                            dweights.data_mut()[w_base + ky * dw + kx] += dw_acc;
                        }
                    }
                }
            }
        }
    }
    Ok((din, dweights, dbias))
}

fn dense_forward<T: Real>(dense: &DenseLayer<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input.dims();
    let s = dense.weights.cols();
    let k = dense.weights.rows();
    if c * h * w != s || h != 1 || w != 1 {
        return Err(Error::ShapeMismatch {
            context: "dense input".into(),
            expected: format!("({s}, 1, 1)"),
            actual: format!("({c}, {h}, {w})"),
        });
    }
    let mut out = Tensor4::zeros([n, k, 1, 1]);
    for b in 0..n {
        let x = &input.data()[b * s..(b + 1) * s];
        for ko in 0..k {
            let row = dense.weights.row(ko);
            let mut acc = dense.bias.get(ko).copied().unwrap_or_else(T::zero);
            for (wv, xv) in row.iter().zip(x) {
                acc += *wv * *xv;
            }
            *out.at_mut(b, ko, 0, 0) = acc;
        }
    }
    Ok(out)
}

fn dense_backward<T: Real>(
    dense: &DenseLayer<T>,
    input: &Tensor4<T>,
    dout: &Tensor4<T>,
) -> Result<(Tensor4<T>, Matrix<T>, Vec<T>)> {
    let [n, s, _, _] = input.dims();
    let k = dense.weights.rows();
    let [dn, dk, _, _] = dout.dims();
    if dn != n || dk != k {
        return Err(Error::ShapeMismatch {
            context: "dense upstream gradient".into(),
            expected: format!("batch {n}, units {k}"),
            actual: format!("batch {dn}, units {dk}"),
        });
    }
    let mut din = Tensor4::zeros(input.dims());
    let mut dweights = Matrix::zeros(k, s);
    let mut dbias = vec![T::zero(); dense.bias.len()];
    for b in 0..n {
        let x = &input.data()[b * s..(b + 1) * s];
        for ko in 0..k {
            let g = dout.at(b, ko, 0, 0);
            if g == T::zero() {
                continue;
            }
            if let Some(db) = dbias.get_mut(ko) {
                *db += g;
            }
            let wrow = dense.weights.row(ko);
            let dwrow = dweights.row_mut(ko);
            let dxrow = &mut din.data_mut()[b * s..(b + 1) * s];
            for j in 0..s {
                dwrow[j] += g * x[j];
                dxrow[j] += g * wrow[j];
            }
        }
    }
    Ok((din, dweights, dbias))
}

fn relu_forward<T: Real>(input: &Tensor4<T>) -> Tensor4<T> {
    let mut out = input.clone();
    for x in out.data_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    out
}

fn relu_backward<T: Real>(input: &Tensor4<T>, dout: &Tensor4<T>) -> Tensor4<T> {
    let mut din = dout.clone();
    for (d, &x) in din.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *d = T::zero();
        }
    }
    din
}

/// Per-channel batch statistics over batch and spatial positions; biased
/// variance, as used for the normalization itself.
fn bn_batch_stats<T: Real>(input: &Tensor4<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = input.dims();
    let count = real_of_usize::<T>(n * h * w);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for b in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    mean[ci] += input.at(b, ci, y, x);
                }
            }
        }
    }
    for m in mean.iter_mut() {
        *m = *m / count;
    }
    for b in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let d = input.at(b, ci, y, x) - mean[ci];
                    var[ci] += d * d;
                }
            }
        }
    }
    for v in var.iter_mut() {
        *v = *v / count;
    }
    (mean, var)
}

fn bn_forward_train<T: Real>(
    bn: &mut BatchNormLayer<T>,
    input: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>)> {
    let [n, c, h, w] = input.dims();
    if c != bn.channels() {
        return Err(Error::ShapeMismatch {
            context: "batchnorm channels".into(),
            expected: format!("{}", bn.channels()),
            actual: format!("{c}"),
        });
    }
    let (mean, var) = bn_batch_stats(input);
    let mut out = input.clone();
    for ci in 0..c {
        let inv = (var[ci] + bn.eps).sqrt().recip();
        let g = bn.gamma[ci];
        let bt = bn.beta[ci];
        let m = mean[ci];
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let v = (input.at(b, ci, y, x) - m) * inv;
                    *out.at_mut(b, ci, y, x) = g * v + bt;
                }
            }
        }
        bn.running_mean[ci] = (T::one() - bn.momentum) * bn.running_mean[ci] + bn.momentum * m;
        bn.running_var[ci] = (T::one() - bn.momentum) * bn.running_var[ci] + bn.momentum * var[ci];
    }
    Ok((out, mean, var))
}

/// Eval-mode batch norm: the affine map
/// `gamma * (x - running_mean) / sqrt(running_var + eps) + beta`.
fn bn_forward_eval<T: Real>(bn: &BatchNormLayer<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input.dims();
    if c != bn.channels() {
        return Err(Error::ShapeMismatch {
            context: "batchnorm channels".into(),
            expected: format!("{}", bn.channels()),
            actual: format!("{c}"),
        });
    }
    let mut out = input.clone();
    for ci in 0..c {
        let inv = (bn.running_var[ci] + bn.eps).sqrt().recip();
        let g = bn.gamma[ci];
        let bt = bn.beta[ci];
        let m = bn.running_mean[ci];
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    *out.at_mut(b, ci, y, x) = g * (input.at(b, ci, y, x) - m) * inv + bt;
                }
            }
        }
    }
    Ok(out)
}

fn bn_backward<T: Real>(
    bn: &BatchNormLayer<T>,
    input: &Tensor4<T>,
    mean: &[T],
    var: &[T],
    dout: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let [n, c, h, w] = input.dims();
    let count = real_of_usize::<T>(n * h * w);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut din = Tensor4::zeros(input.dims());
    for ci in 0..c {
        let inv = (var[ci] + bn.eps).sqrt().recip();
        let m = mean[ci];
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let dy = dout.at(b, ci, y, x);
                    let xhat = (input.at(b, ci, y, x) - m) * inv;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
            }
        }
        dgamma[ci] = sum_dy_xhat;
        dbeta[ci] = sum_dy;
        let scale = bn.gamma[ci] * inv;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let dy = dout.at(b, ci, y, x);
                    let xhat = (input.at(b, ci, y, x) - m) * inv;
                    *din.at_mut(b, ci, y, x) =
                        scale * (dy - sum_dy / count - xhat * sum_dy_xhat / count);
                }
            }
        }
    }
    (din, dgamma, dbeta)
}
