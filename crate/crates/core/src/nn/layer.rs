//! Layer records: parameter blocks, shape rules and the kernel-to-matrix
//! reshaping that bridges training to the proximal and compression machinery.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{real, Real};

use super::tensor::Tensor4;

/// Kernel layout of a convolutional layer.
///
/// `Vertical`/`Horizontal` are the 1-D halves of a decomposed layer: a
/// vertical kernel is `dV x 1`, a horizontal kernel `1 x dH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Full,
    Vertical,
    Horizontal,
}

/// Convolution with explicit zero padding and square stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kind: ConvKind,
    /// `(K, C, dH, dW)`: output channels, input channels, kernel height/width.
    pub weights: Tensor4<T>,
    /// One bias per output channel, or empty for a bias-free layer (the
    /// spatial half of a factorized pair).
    pub bias: Vec<T>,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    /// Whether the proximal regularizers apply to this layer.
    pub regularized: bool,
    /// Set on the two halves produced by layer factorization so a second
    /// compression pass leaves them alone.
    pub factored: bool,
}

/// Fully-connected layer; weights are `(K, S)` = (units, inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub regularized: bool,
    pub factored: bool,
}

/// Per-channel batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    /// Fraction of the batch statistic blended into the running estimate.
    pub momentum: T,
}

impl<T: Real> BatchNormLayer<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormLayer {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: real(1e-5),
            momentum: real(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// One record in a [`super::Network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    Dense(DenseLayer<T>),
    BatchNorm(BatchNormLayer<T>),
    Relu,
    Flatten,
}

impl<T: Real> Layer<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(c) => match c.kind {
                ConvKind::Full => "conv2d",
                ConvKind::Vertical => "conv1d_vertical",
                ConvKind::Horizontal => "conv1d_horizontal",
            },
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    /// Output `(C, H, W)` given the input shape, or a diagnostic naming the
    /// mismatch.
    pub fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input;
        match self {
            Layer::Conv(conv) => {
                let [k, wc, dh, dw] = conv.weights.dims();
                if wc != c {
                    return Err(Error::ShapeMismatch {
                        context: "conv input channels".into(),
                        expected: format!("{wc}"),
                        actual: format!("{c}"),
                    });
                }
                let hp = h + 2 * conv.pad_h;
                let wp = w + 2 * conv.pad_w;
                if hp < dh || wp < dw {
                    return Err(Error::ShapeMismatch {
                        context: "conv spatial extent".into(),
                        expected: format!("at least {dh}x{dw} after padding"),
                        actual: format!("{hp}x{wp}"),
                    });
                }
                let oh = (hp - dh) / conv.stride + 1;
                let ow = (wp - dw) / conv.stride + 1;
                Ok((k, oh, ow))
            }
            Layer::Dense(d) => {
                let s = d.weights.cols();
                if (c, h, w) != (s, 1, 1) {
                    return Err(Error::ShapeMismatch {
                        context: "dense input".into(),
                        expected: format!("({s}, 1, 1)"),
                        actual: format!("({c}, {h}, {w})"),
                    });
                }
                Ok((d.weights.rows(), 1, 1))
            }
            Layer::BatchNorm(bn) => {
                if bn.channels() != c {
                    return Err(Error::ShapeMismatch {
                        context: "batchnorm channels".into(),
                        expected: format!("{}", bn.channels()),
                        actual: format!("{c}"),
                    });
                }
                Ok(input)
            }
            Layer::Relu => Ok(input),
            Layer::Flatten => Ok((c * h * w, 1, 1)),
        }
    }

    /// Whether this layer owns a parameter matrix that the regularizers and
    /// the compressor operate on.
    pub fn is_parametric(&self) -> bool {
        matches!(self, Layer::Conv(_) | Layer::Dense(_))
    }

    pub fn is_regularized(&self) -> bool {
        match self {
            Layer::Conv(c) => c.regularized,
            Layer::Dense(d) => d.regularized,
            _ => false,
        }
    }
}

impl<T: Real> ConvLayer<T> {
    /// Seeded He-uniform initialization (fan-in scaling). Bias starts at zero.
    pub fn he_init(
        kind: ConvKind,
        k: usize,
        c: usize,
        dh: usize,
        dw: usize,
        stride: usize,
        pad_h: usize,
        pad_w: usize,
        seed: u64,
    ) -> Self {
        match kind {
            ConvKind::Vertical => debug_assert_eq!(dw, 1, "vertical kernels are dV x 1"),
            ConvKind::Horizontal => debug_assert_eq!(dh, 1, "horizontal kernels are 1 x dH"),
            ConvKind::Full => {}
        }
        let fan_in = c * dh * dw;
        let weights = Tensor4::from_vec([k, c, dh, dw], he_uniform(k * fan_in, fan_in, seed))
            .expect("init shape is consistent by construction");
        ConvLayer {
            kind,
            weights,
            bias: vec![T::zero(); k],
            stride,
            pad_h,
            pad_w,
            regularized: true,
            factored: false,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }
}

impl<T: Real> DenseLayer<T> {
    pub fn he_init(units: usize, inputs: usize, seed: u64) -> Self {
        let weights = Matrix::from_vec(units, inputs, he_uniform(units * inputs, inputs, seed))
            .expect("init shape is consistent by construction");
        DenseLayer {
            weights,
            bias: vec![T::zero(); units],
            regularized: true,
            factored: false,
        }
    }
}

/// Uniform(-limit, limit) with limit = sqrt(6 / fan_in), drawn in f64 and
/// cast so the stream is identical regardless of the scalar type.
fn he_uniform<T: Real>(len: usize, fan_in: usize, seed: u64) -> Vec<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| real(rng.random_range(-limit..limit)))
        .collect()
}

/// Reshape a conv or dense parameter block into its `K x S` matrix,
/// `S = C * dH * dW`. Row `k` is the flattened kernel of output unit `k`
/// (C-major, then kernel rows, then kernel columns), which is exactly the
/// row-major layout of the `(C, dH, dW)` sub-tensor.
pub fn reshape_kernel_to_matrix<T: Real>(layer: &Layer<T>) -> Result<Matrix<T>> {
    match layer {
        Layer::Conv(conv) => {
            let [k, c, dh, dw] = conv.weights.dims();
            Matrix::from_vec(k, c * dh * dw, conv.weights.data().to_vec())
        }
        Layer::Dense(d) => Ok(d.weights.clone()),
        other => Err(Error::InvalidArgument(format!(
            "layer kind {} has no parameter matrix to reshape",
            other.kind_name()
        ))),
    }
}

/// Inverse of [`reshape_kernel_to_matrix`]; restores the parameter block
/// bit-exactly.
pub fn write_matrix_to_kernel<T: Real>(layer: &mut Layer<T>, m: &Matrix<T>) -> Result<()> {
    match layer {
        Layer::Conv(conv) => {
            let [k, c, dh, dw] = conv.weights.dims();
            if m.rows() != k || m.cols() != c * dh * dw {
                return Err(Error::ShapeMismatch {
                    context: "write_matrix_to_kernel".into(),
                    expected: format!("{k}x{}", c * dh * dw),
                    actual: format!("{}x{}", m.rows(), m.cols()),
                });
            }
            conv.weights.data_mut().copy_from_slice(m.data());
            Ok(())
        }
        Layer::Dense(d) => {
            if m.rows() != d.weights.rows() || m.cols() != d.weights.cols() {
                return Err(Error::ShapeMismatch {
                    context: "write_matrix_to_kernel".into(),
                    expected: format!("{}x{}", d.weights.rows(), d.weights.cols()),
                    actual: format!("{}x{}", m.rows(), m.cols()),
                });
            }
            d.weights = m.clone();
            Ok(())
        }
        other => Err(Error::InvalidArgument(format!(
            "layer kind {} has no parameter matrix to write",
            other.kind_name()
        ))),
    }
}
