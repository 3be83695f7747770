//! Mixing, depth and shape properties with their abstract semantics.

mod infer;
mod mixing;
mod semantics;

pub use infer::{chain_graph, infer_graph_properties, IoPair};
pub use mixing::{count_deficient, loc_add, loc_mul, mix_compose, Loc, MixingError, MixingMatrix};
pub use semantics::{
    abstract_mixing, append_abstract, linearity, op_abstract_semantics, satisfies,
    AbstractOpSemantics, DepthState, Linearity, PropertyState, TargetSpec,
};
