//! Minimal dense-tensor engine.
//!
//! Tensors are immutable-by-convention, row-major, rank 1..=4 arrays. Rank-4
//! tensors are interpreted as (N, H, W, C), i.e. channel-last. Every forward
//! operation in this module comes with an analytic adjoint, and the adjoints
//! are verified against central finite differences (see [`gradcheck`]).
//!
//! Production paths run on `f32`; gradient checks run on `f64`.

mod activate;
mod conv;
mod gradcheck;
mod norm;
mod pool;
mod upsample;

pub use activate::{activate, activate_backward, Activation};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvSpec, Padding};
pub use gradcheck::{grad_check, project, projection, GradCheckReport};
pub use norm::{
    batchnorm, batchnorm_backward, BnGrads, BnMode, BnOutput, BnStats, DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM,
};
pub use pool::{pool2d, pool2d_backward, PoolMode, PoolSwitches};
pub use upsample::{
    conv2d_transpose, conv2d_transpose_backward, pixel_shuffle, space_to_depth, unpool,
    unpool_backward, upsample, upsample_nearest, upsample_nearest_backward, UpsampleAux,
    UpsampleMode,
};

use num_traits::Float;
use std::fmt;
use thiserror::Error;

/// Element type for tensor data. Implemented for `f32` and `f64`.
pub trait Scalar: Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static {
    /// Lossless-enough cast from `f64` for constants and conversions.
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
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

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape/data mismatch: shape {shape:?} implies {expected} elements, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: output extent would be non-positive ({detail})")]
    EmptyOutput { op: &'static str, detail: String },
    #[error("non-finite value in {context} at flat index {index}")]
    NonFinite { context: String, index: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor of rank 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, validating rank, extent positivity, element count and
    /// finiteness.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                context: "tensor construction".into(),
                index: i,
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    fn check_shape(shape: &[usize]) -> Result<()> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                reason: "rank must be 1..=4".into(),
            });
        }
        if shape.contains(&0) {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                reason: "extents must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::check_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self::check_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Self {
        Self::check_shape(shape).expect("valid shape");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Extents as (N, H, W, C); fails unless rank is exactly 4.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(TensorError::ShapeMismatch {
                op: "dims4",
                detail: format!("expected rank 4, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            _ => Err(TensorError::ShapeMismatch {
                op: "dims3",
                detail: format!("expected rank 3, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((h, w)),
            _ => Err(TensorError::ShapeMismatch {
                op: "dims2",
                detail: format!("expected rank 2, got shape {:?}", self.shape),
            }),
        }
    }

    #[inline]
    pub fn at4(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        let (_, hh, ww, cc) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * hh + h) * ww + w) * cc + c]
    }

    #[inline]
    pub fn set4(&mut self, n: usize, h: usize, w: usize, c: usize, v: T) {
        let (_, hh, ww, cc) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * hh + h) * ww + w) * cc + c] = v;
    }

    #[inline]
    pub fn add4(&mut self, n: usize, h: usize, w: usize, c: usize, v: T) {
        let (_, hh, ww, cc) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let i = ((n * hh + h) * ww + w) * cc + c;
        self.data[i] = self.data[i] + v;
    }

    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> T {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set2(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.shape[1] + c] = v;
    }

    #[inline]
    pub fn at3(&self, h: usize, w: usize, c: usize) -> T {
        self.data[(h * self.shape[1] + w) * self.shape[2] + c]
    }

    #[inline]
    pub fn set3(&mut self, h: usize, w: usize, c: usize, v: T) {
        self.data[(h * self.shape[1] + w) * self.shape[2] + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; shapes must match exactly.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "zip_map",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Reinterprets a rank-2/3 tensor as rank-4 (1, H, W, C).
    pub fn to_nhwc(&self) -> Result<Self> {
        let shape = match *self.shape.as_slice() {
            [h, w] => vec![1, h, w, 1],
            [h, w, c] => vec![1, h, w, c],
            [_, _, _, _] => return Ok(self.clone()),
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "to_nhwc",
                    detail: format!("cannot lift shape {:?}", self.shape),
                })
            }
        };
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn mean(&self) -> T {
        let sum = self.data.iter().fold(T::zero(), |a, &b| a + b);
        sum / T::from_f64(self.data.len() as f64)
    }

    /// Max absolute elementwise difference; panics on shape mismatch (test helper).
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}
