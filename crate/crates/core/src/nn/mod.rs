//! Minimal deterministic neural-network engine.
//!
//! Layer forward/backward passes are hand-written per layer kind (no general
//! autodiff), batches flow as `(batch, C, H, W)` tensors, and each parameter
//! block can be reshaped into the `K x S` matrix the proximal operators and
//! the compressor work on.

mod layer;
mod loss;
mod network;
mod optim;
mod tensor;

pub use layer::{
    reshape_kernel_to_matrix, write_matrix_to_kernel, BatchNormLayer, ConvKind, ConvLayer,
    DenseLayer, Layer,
};
pub use loss::cross_entropy;
pub use network::{ForwardCache, GradientSet, LayerGrad, Network};
pub use optim::{sgd_step, MomentumState};
pub use tensor::Tensor4;
