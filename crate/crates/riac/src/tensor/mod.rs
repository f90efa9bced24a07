//! Dense f64 tensors and a tape-based reverse-mode autodiff engine.
//!
//! Feature maps use channels-last layout: a `[H, W, C]` tensor stores
//! element `(y, x, c)` at flat index `(y * W + x) * C + c`.

mod adam;
mod checkpoint;
mod gradcheck;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use tape::{BnMode, Tape, Var};

use crate::error::{Error, Result};

/// Plain dense value: shape plus row-major data. Gradients live on the
/// [`Tape`], not here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index of `(y, x, c)` in an `[H, W, C]` map.
    #[inline]
    pub fn hwc_index(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (y * self.shape[1] + x) * self.shape[2] + c
    }
}

/// Output side length of a convolution or pooling window.
pub fn conv_out_dim(input: usize, k: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - k) / stride + 1
}
