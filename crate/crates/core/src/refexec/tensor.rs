use rand::Rng;
use thiserror::Error;

use crate::graph::{ShapeError, TensorShape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("expected {expected} values for shape {shape}, got {found}")]
    ValueCount {
        shape: TensorShape,
        expected: usize,
        found: usize,
    },
    #[error("operand has shape {found}, op was prepared for {expected}")]
    OperandShape {
        expected: TensorShape,
        found: TensorShape,
    },
    #[error("weights do not fit {0}")]
    Weights(String),
    #[error("shape {shape} has {elements} elements, above the cap of {cap}")]
    TooLarge {
        shape: TensorShape,
        elements: usize,
        cap: usize,
    },
}

/// Row-major real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: TensorShape,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: TensorShape, values: Vec<f64>) -> Result<Self, ExecError> {
        let expected = shape.num_elements();
        if values.len() != expected {
            return Err(ExecError::ValueCount {
                shape,
                expected,
                found: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let n = shape.num_elements();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    /// Uniform values in [-1, 1).
    pub fn random<R: Rng + ?Sized>(shape: TensorShape, rng: &mut R) -> Self {
        let n = shape.num_elements();
        Self {
            shape,
            values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[flat_index(&self.shape.strides(), index)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub(crate) fn flat_index(strides: &[usize], index: &[usize]) -> usize {
    strides.iter().zip(index).map(|(s, i)| s * i).sum()
}

pub(crate) fn unflatten(strides: &[usize], mut flat: usize, out: &mut [usize]) {
    for (o, &s) in out.iter_mut().zip(strides) {
        *o = flat / s;
        flat %= s;
    }
}
