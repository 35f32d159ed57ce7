//! Compression-aware training of small neural networks.
//!
//! The crate trains networks under a nuclear-norm (low-rank) regularizer,
//! optionally combined with a sparse group Lasso, using proximal stochastic
//! gradient descent, then compresses the result by pruning zeroed-out units
//! and factorizing each layer through its SVD. Parameter and
//! multiply-accumulate (MAC) savings are reported alongside accuracy.
//!
//! Modules:
//! - [`linalg`]: dense matrices, Jacobi SVD, singular-value soft-thresholding;
//! - [`nn`]: a minimal deterministic network engine (forward, hand-written
//!   backward, SGD with momentum and weight decay);
//! - [`regularizers`]: the regularizer values and proximal operators, and the
//!   per-epoch proximal schedule;
//! - [`compressor`]: unit pruning, energy-based rank selection, SVD layer
//!   factorization and parameter/MAC accounting;
//! - [`data`]: IDX/CSV loaders, seeded batching and planted low-rank teacher
//!   synthesis.
//!
//! All numeric kernels are generic over the scalar type via [`scalar::Real`];
//! the aliases below pin `f64`, the working precision used by the training
//! pipeline and the file formats.

pub mod compressor;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod regularizers;
pub mod scalar;

pub use error::{Error, Result};

/// Dense matrix at working precision.
pub type Matrix = linalg::Matrix<f64>;
/// 4-D tensor at working precision.
pub type Tensor4 = nn::Tensor4<f64>;
/// Network at working precision.
pub type Network = nn::Network<f64>;
/// Dataset at working precision.
pub type Dataset = data::Dataset<f64>;
