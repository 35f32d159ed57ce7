//! 4-D tensor in row-major order.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense 4-D array, row-major over `dims = (n0, n1, n2, n3)`.
///
/// Used both for parameter blocks `(K, C, dH, dW)` and for activations
/// `(batch, C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        let len: usize = dims.iter().product();
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        Tensor4 {
            dims,
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) || data.len() != len {
            return Err(Error::ShapeMismatch {
                context: "Tensor4::from_vec".into(),
                expected: format!("{dims:?} = {len} entries"),
                actual: format!("{} entries", data.len()),
            });
        }
        Ok(Tensor4 { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> T {
        self.data[self.offset(i0, i1, i2, i3)]
    }

    #[inline]
    pub fn at_mut(&mut self, i0: usize, i1: usize, i2: usize, i3: usize) -> &mut T {
        let off = self.offset(i0, i1, i2, i3);
        &mut self.data[off]
    }

    #[inline]
    pub fn offset(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(
            i0 < self.dims[0] && i1 < self.dims[1] && i2 < self.dims[2] && i3 < self.dims[3]
        );
        ((i0 * self.dims[1] + i1) * self.dims[2] + i2) * self.dims[3] + i3
    }

    /// Reinterpret with new dims of identical total length; data unchanged.
    pub fn reshaped(&self, dims: [usize; 4]) -> Result<Tensor4<T>> {
        let len: usize = dims.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor4::reshaped".into(),
                expected: format!("{} entries", self.data.len()),
                actual: format!("{dims:?} = {len} entries"),
            });
        }
        Ok(Tensor4 {
            dims,
            data: self.data.clone(),
        })
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                context: context.to_string(),
                index,
            }),
            None => Ok(()),
        }
    }
}
