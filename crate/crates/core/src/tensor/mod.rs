//! Dense row-major matrices with a reverse-mode differentiation tape.
//!
//! Everything the topic model trains runs through this module: [`Tape`] records
//! operations on [`Tensor`] values and [`Tape::backward`] walks the record once
//! in reverse. Training uses `f32`; gradient checks instantiate the same code
//! with `f64` (see [`gradcheck`]).

mod adam;
pub mod gradcheck;
mod kernels;
mod nn;
mod tape;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use nn::{BatchNorm1d, Linear, Mode, ParamId, Params, RunningStats};
pub use tape::{Gradients, SparseMatrix, Tape, Var};

/// Floating point types the tape can run on.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + Sum + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite activations after {0}")]
    NonFiniteActivation(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense matrix. Vectors are `1 x n` rows and scalars are `1 x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, F::zero())
    }

    pub fn full(rows: usize, cols: usize, value: F) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TensorError::Contract(format!(
                "buffer of length {} cannot be shaped {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| F::from_f64(x)).collect())
    }

    pub fn row_vector(data: Vec<F>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: F) {
        self.data[r * self.cols + c] = value;
    }

    /// The single entry of a `1 x 1` tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.data[r * self.cols + c]);
            }
        }
        Tensor {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::from_f64(x.as_f64())).collect(),
        }
    }
}
