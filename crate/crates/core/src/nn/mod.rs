//! Hand-implemented numeric kernels: LSTM cell, batch normalization,
//! dropout, ReLU, fully-connected head, softmax cross-entropy, and Adam.
//! Every kernel has an explicit forward and backward pass; no autodiff.
//!
//! Kernels are generic over [`Scalar`] so the production f32 model can be
//! re-run in f64 for finite-difference gradient checking.

mod adam;
mod batchnorm;
mod dropout;
mod linear;
mod loss;
mod lstm;
mod model;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormParams, BatchNormTape};
pub use dropout::{dropout_backward, dropout_forward, DropoutTape};
pub use linear::{fc_backward, fc_forward, relu, relu_backward, FcParams};
pub use loss::softmax_cross_entropy;
pub use lstm::{
    lstm_backward, lstm_forward, lstm_forward_sparse, LstmInput, LstmLayerParams, LstmTape,
    GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT,
};
pub use model::{
    model_backward, model_forward, LstmClassifier, ModelGrads, ModelTape, CHECKPOINT_VERSION,
};

use num_traits::Float;

/// Element type the kernels run in. f32 in production, f64 in check mode.
pub trait Scalar:
    Float + num_traits::NumAssign + std::fmt::Debug + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Forward-pass mode: training uses batch statistics and active dropout,
/// evaluation uses running statistics and identity dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols);
            data.extend_from_slice(row);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub(crate) fn cast<F: Scalar>(v: f64) -> F {
    F::from_f64(v)
}

pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}
