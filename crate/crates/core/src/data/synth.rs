//! Planted low-rank teacher synthesis.
//!
//! Builds a random convolutional teacher whose parameter matrices have
//! exactly the requested ranks (products of random factors), then labels
//! random inputs with the teacher's own argmax. Training a student on this
//! data gives a task whose ground-truth ranks are known, which is what the
//! rank-recovery experiments check against.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{effective_rank, Matrix};
use crate::nn::{ConvKind, ConvLayer, DenseLayer, Layer, Network, Tensor4};
use crate::scalar::{real, Real};

use super::{derive_seed, Dataset};

/// One teacher convolution: `out_channels` filters of `kernel` size with a
/// planted parameter-matrix rank.
#[derive(Debug, Clone, Copy)]
pub struct TeacherConvSpec {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub rank: usize,
}

/// Full description of a synthetic task.
#[derive(Debug, Clone)]
pub struct TeacherSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub input_shape: (usize, usize, usize),
    pub conv_layers: Vec<TeacherConvSpec>,
    pub class_count: usize,
}

/// Build the teacher network alone (no data). Conv layers use valid padding
/// and stride 1, ReLU between them, and a dense head after a flatten.
pub fn teacher_network<T: Real>(spec: &TeacherSpec) -> Result<Network<T>> {
    let mut layers: Vec<Layer<T>> = Vec::new();
    let (mut c, mut h, mut w) = spec.input_shape;
    for (li, conv_spec) in spec.conv_layers.iter().enumerate() {
        let (dh, dw) = conv_spec.kernel;
        let k = conv_spec.out_channels;
        let s = c * dh * dw;
        if conv_spec.rank == 0 || conv_spec.rank > k.min(s) {
            return Err(Error::InvalidArgument(format!(
                "teacher layer {li}: planted rank {} infeasible for a {k}x{s} matrix",
                conv_spec.rank
            )));
        }
        if h < dh || w < dw {
            return Err(Error::InvalidArgument(format!(
                "teacher layer {li}: kernel {dh}x{dw} larger than activation {h}x{w}"
            )));
        }
        let weights = planted_matrix(
            k,
            s,
            conv_spec.rank,
            derive_seed(spec.seed, 0xA0 + li as u64, 0),
        )?;
        layers.push(Layer::Conv(ConvLayer {
            kind: ConvKind::Full,
            weights: Tensor4::from_vec([k, c, dh, dw], weights.data().to_vec())?,
            bias: vec![T::zero(); k],
            stride: 1,
            pad_h: 0,
            pad_w: 0,
            regularized: true,
            factored: false,
        }));
        layers.push(Layer::Relu);
        c = k;
        h = h - dh + 1;
        w = w - dw + 1;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(DenseLayer::he_init(
        spec.class_count,
        c * h * w,
        derive_seed(spec.seed, 0xF0, 0),
    )));
    Network::new(spec.input_shape, layers)
}

/// `K x S` product of random factors with exact rank `rank`, re-drawn (still
/// deterministically) until the effective rank at 1e-7 matches the plant.
fn planted_matrix<T: Real>(k: usize, s: usize, rank: usize, seed: u64) -> Result<Matrix<T>> {
    for attempt in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x11, attempt));
        let mut left = Matrix::<T>::zeros(k, rank);
        for x in left.data_mut() {
            *x = real(rng.random_range(-1.0..1.0));
        }
        let mut right = Matrix::<T>::zeros(rank, s);
        for x in right.data_mut() {
            *x = real(rng.random_range(-1.0..1.0));
        }
        // Scale so entries stay O(1) regardless of the planted rank.
        let scale = real::<T>(1.0 / (rank as f64).sqrt());
        let mut m = left.matmul(&right)?;
        for x in m.data_mut() {
            *x = *x * scale;
        }
        if effective_rank(&m, real(1e-7))? == rank {
            return Ok(m);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not plant a rank-{rank} {k}x{s} matrix (degenerate random draw)"
    )))
}

/// Random inputs in `[0, 1]` labeled by the teacher's argmax.
pub fn teacher_dataset<T: Real>(
    teacher: &Network<T>,
    class_count: usize,
    seed: u64,
    n_samples: usize,
) -> Result<Dataset<T>> {
    let (c, h, w) = teacher.input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xDA7A, 0));
    let mut data = Vec::with_capacity(n_samples * c * h * w);
    for _ in 0..n_samples * c * h * w {
        data.push(real::<T>(rng.random_range(0.0..1.0)));
    }
    let images = Tensor4::from_vec([n_samples, c, h, w], data)?;

    let mut labels = Vec::with_capacity(n_samples);
    let chunk = 256;
    let stride = c * h * w;
    let mut start = 0;
    while start < n_samples {
        let end = (start + chunk).min(n_samples);
        let slice = images.data()[start * stride..end * stride].to_vec();
        let batch = Tensor4::from_vec([end - start, c, h, w], slice)?;
        let logits = teacher.forward_eval(&batch)?;
        for i in 0..logits.rows() {
            labels.push(argmax(logits.row(i)));
        }
        start = end;
    }
    Dataset::new(images, labels, class_count)
}

/// Build the teacher and a dataset labeled by it in one call.
pub fn synthesize_teacher<T: Real>(spec: &TeacherSpec) -> Result<(Dataset<T>, Network<T>)> {
    let teacher = teacher_network(spec)?;
    let ds = teacher_dataset(&teacher, spec.class_count, spec.seed, spec.n_samples)?;
    Ok((ds, teacher))
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
