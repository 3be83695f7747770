//! Computation-graph IR: shapes, primitive ops, the op catalog, graphs, selection and
//! rewriting, serialization.

mod catalog;
mod ir;
mod op;
mod rewrite;
pub mod serial;
mod shape;

pub use catalog::{op_catalog, CatalogConfig, CatalogError};
pub use ir::{
    Block, ComputationGraph, Edge, Endpoint, GraphError, GraphInput, Node, NodeId,
    ValidationReport, Violation,
};
pub use op::{ConvSpec, Features, OpKind, PrimitiveOp};
pub use rewrite::{
    decompose_sequential, replace_subgraph, select_subgraph, Decomposition, SizeDistribution,
    SubgraphSelection,
};
pub use serial::{deserialize, serialize, ParseError};
pub use shape::{ShapeError, TensorShape};

/// Validation entry point as a free function.
pub fn validate(graph: &ComputationGraph) -> ValidationReport {
    graph.validate()
}
