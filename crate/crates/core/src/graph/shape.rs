use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when an operation cannot be applied to a tensor shape.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("shape must have rank >= 2 and positive dims, got {0:?}")]
    Malformed(Vec<usize>),
    #[error("{op} needs at least one spatial dimension, got rank {rank}")]
    NoSpatial { op: String, rank: usize },
    #[error("{op}: spatial dims {dims:?} not divisible by {factor}")]
    NotDivisible {
        op: String,
        dims: Vec<usize>,
        factor: usize,
    },
    #[error("{op}: cannot resolve {features} output features from {channels} channels")]
    Features {
        op: String,
        features: String,
        channels: usize,
    },
    #[error("{op}: {groups} groups incompatible with {channels} channels")]
    Groups {
        op: String,
        groups: usize,
        channels: usize,
    },
    #[error("{op}: expected {expected} operand(s), got {found}")]
    Arity {
        op: String,
        expected: usize,
        found: usize,
    },
    #[error("add of mismatched shapes {0} and {1}")]
    Mismatch(TensorShape, TensorShape),
    #[error("invalid parameters for {op}: {reason}")]
    Params { op: String, reason: String },
}

/// Tensor shape, batch first and channel last with spatial dims in between.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self, ShapeError> {
        let dims = dims.into();
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ShapeError::Malformed(dims));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn batch(&self) -> usize {
        self.0[0]
    }

    pub fn channels(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    pub fn spatial(&self) -> &[usize] {
        &self.0[1..self.0.len() - 1]
    }

    pub fn num_elements(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        let mut dims = self.0.clone();
        *dims.last_mut().expect("rank >= 2") = channels;
        Self(dims)
    }

    pub fn with_spatial(&self, spatial: &[usize]) -> Self {
        assert_eq!(spatial.len(), self.rank() - 2, "spatial rank mismatch");
        let mut dims = self.0.clone();
        dims[1..self.0.len() - 1].copy_from_slice(spatial);
        Self(dims)
    }

    /// Short axis labels used in rendered tables: B, (H, W | L | S1..), C.
    pub fn axis_labels(rank: usize) -> Vec<String> {
        let spatial: Vec<String> = match rank.saturating_sub(2) {
            0 => vec![],
            1 => vec!["L".into()],
            2 => vec!["H".into(), "W".into()],
            n => (1..=n).map(|i| format!("S{i}")).collect(),
        };
        let mut labels = vec!["B".to_string()];
        labels.extend(spatial);
        labels.push("C".into());
        labels
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = ShapeError;

    fn try_from(value: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(value: TensorShape) -> Self {
        value.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}
