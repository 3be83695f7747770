use std::fmt;

use serde::{Deserialize, Serialize};

use super::mixing::{count_deficient, mix_compose, Loc, MixingMatrix};
use crate::graph::{OpKind, PrimitiveOp, ShapeError, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearity {
    Linear,
    Nonlinear,
}

/// Hand-maintained linearity table. Pools and norms count as linear steps.
pub fn linearity(kind: OpKind) -> Linearity {
    match kind {
        OpKind::ReLU | OpKind::GeLU | OpKind::SiLU | OpKind::Sigmoid | OpKind::Softmax => {
            Linearity::Nonlinear
        }
        _ => Linearity::Linear,
    }
}

/// Alternation count plus the kind of the last op (None only for the empty program).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DepthState {
    pub count: u32,
    pub last_kind: Option<Linearity>,
}

impl DepthState {
    pub fn push(self, kind: Linearity) -> Self {
        if self.last_kind == Some(kind) {
            self
        } else {
            Self {
                count: self.count + 1,
                last_kind: Some(kind),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractOpSemantics {
    pub mixing: MixingMatrix,
    pub kind: Linearity,
    pub output_shape: TensorShape,
}

/// Input dims feeding every output dim through a shared full channel read, with the
/// given locality on the spatial diagonal.
fn channel_mixer(rank: usize, spatial: Loc) -> MixingMatrix {
    let mut m = MixingMatrix::identity(rank);
    for d in 1..rank - 1 {
        m.set(d, d, spatial);
    }
    for r in 0..rank {
        m.set(r, rank - 1, Loc::A);
    }
    m
}

/// Abstract mixing of an op at a given rank (independent of the concrete sizes).
pub fn abstract_mixing(op: &PrimitiveOp, rank: usize) -> MixingMatrix {
    let spatial_of_window = |k: usize| if k > 1 { Loc::M } else { Loc::O };
    match *op {
        PrimitiveOp::Dense { .. } | PrimitiveOp::LayerNorm | PrimitiveOp::Softmax => {
            channel_mixer(rank, Loc::O)
        }
        PrimitiveOp::Convolution { kernel, .. }
        | PrimitiveOp::DilatedConvolution { kernel, .. } => {
            channel_mixer(rank, spatial_of_window(kernel))
        }
        PrimitiveOp::GroupedConvolution { kernel, .. } => {
            let mut m = MixingMatrix::identity(rank);
            for d in 1..rank - 1 {
                m.set(d, d, spatial_of_window(kernel));
            }
            m.set(rank - 1, rank - 1, Loc::M);
            m
        }
        PrimitiveOp::GroupNorm { .. } => {
            let mut m = MixingMatrix::identity(rank);
            m.set(rank - 1, rank - 1, Loc::M);
            m
        }
        PrimitiveOp::AveragePool { .. } | PrimitiveOp::MaxPool { .. } => {
            let mut m = MixingMatrix::identity(rank);
            for d in 1..rank - 1 {
                m.set(d, d, Loc::M);
            }
            m
        }
        _ => MixingMatrix::identity(rank),
    }
}

/// Abstract semantics of a single-input op at `input`. For Add this is the
/// per-operand view (identity mixing).
pub fn op_abstract_semantics(
    op: &PrimitiveOp,
    input: &TensorShape,
) -> Result<AbstractOpSemantics, ShapeError> {
    let output_shape = if let PrimitiveOp::Add = op {
        op.output_shape(&[input, input])?
    } else {
        op.apply_shape(input)?
    };
    Ok(AbstractOpSemantics {
        mixing: abstract_mixing(op, input.rank()),
        kind: linearity(op.kind()),
        output_shape,
    })
}

/// Mixing, depth and shape of one input/output pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PropertyState {
    pub mixing: MixingMatrix,
    pub depth: DepthState,
    pub shape: TensorShape,
}

impl PropertyState {
    /// Properties of the identity program on `shape`.
    pub fn identity(shape: TensorShape) -> Self {
        Self {
            mixing: MixingMatrix::identity(shape.rank()),
            depth: DepthState::default(),
            shape,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.depth == DepthState::default()
            && self.mixing == MixingMatrix::identity(self.shape.rank())
    }

    pub fn append(&self, op: &PrimitiveOp) -> Result<Self, ShapeError> {
        append_abstract(self, op)
    }

    pub fn append_all<'a>(
        &self,
        ops: impl IntoIterator<Item = &'a PrimitiveOp>,
    ) -> Result<Self, ShapeError> {
        let mut s = self.clone();
        for op in ops {
            s = s.append(op)?;
        }
        Ok(s)
    }

    pub fn render(&self) -> String {
        let labels = TensorShape::axis_labels(self.shape.rank());
        format!(
            "{}depth: {}\nshape: {}\n",
            self.mixing.render(&labels),
            self.depth.count,
            self.shape
        )
    }
}

pub fn append_abstract(
    state: &PropertyState,
    op: &PrimitiveOp,
) -> Result<PropertyState, ShapeError> {
    let sem = op_abstract_semantics(op, &state.shape)?;
    let mixing = mix_compose(&sem.mixing, &state.mixing).expect("rank is preserved by simple ops");
    Ok(PropertyState {
        mixing,
        depth: state.depth.push(sem.kind),
        shape: sem.output_shape,
    })
}

/// Optional target per property; at least one should be present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<TensorShape>,
}

impl TargetSpec {
    /// The exact properties of `state` as a target.
    pub fn from_state(state: &PropertyState) -> Self {
        Self {
            mixing: Some(state.mixing.clone()),
            depth: Some(state.depth.count),
            shape: Some(state.shape.clone()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.mixing.is_none() && self.depth.is_none() && self.shape.is_none()
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(m) = &self.mixing {
            parts.push(format!("mixing={m}"));
        }
        if let Some(d) = self.depth {
            parts.push(format!("depth>={d}"));
        }
        if let Some(s) = &self.shape {
            parts.push(format!("shape={s}"));
        }
        write!(f, "{}", parts.join(" "))
    }
}

pub fn satisfies(props: &PropertyState, target: &TargetSpec) -> bool {
    if let Some(v) = &target.mixing {
        if !v.same_dims(&props.mixing) || count_deficient(&props.mixing, v) > 0 {
            return false;
        }
    }
    if let Some(d) = target.depth {
        if props.depth.count < d {
            return false;
        }
    }
    if let Some(s) = &target.shape {
        if *s != props.shape {
            return false;
        }
    }
    true
}
