//! Text format for graphs (JSON) and DOT export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ir::{Block, ComputationGraph, GraphInput, Node, NodeId};
use super::op::PrimitiveOp;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    #[serde(flatten)]
    op: PrimitiveOp,
    inputs: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    inputs: Vec<GraphInput>,
    nodes: Vec<NodeRecord>,
    outputs: Vec<NodeId>,
    #[serde(default)]
    blocks: Vec<Block>,
}

pub fn to_json(graph: &ComputationGraph) -> String {
    let file = GraphFile {
        format_version: FORMAT_VERSION,
        inputs: graph.inputs.clone(),
        nodes: graph
            .nodes
            .iter()
            .map(|(&id, n)| NodeRecord {
                id,
                op: n.op.clone(),
                inputs: n.inputs.clone(),
            })
            .collect(),
        outputs: graph.outputs.clone(),
        blocks: graph.blocks.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("graph serializes");
    text.push('\n');
    text
}

pub fn serialize(graph: &ComputationGraph) -> Vec<u8> {
    to_json(graph).into_bytes()
}

pub fn deserialize(bytes: &[u8]) -> Result<ComputationGraph, ParseError> {
    let file: GraphFile = serde_json::from_slice(bytes)?;
    if file.format_version != FORMAT_VERSION {
        return Err(ParseError::Version(file.format_version));
    }
    let mut nodes = BTreeMap::new();
    for rec in file.nodes {
        if nodes
            .insert(
                rec.id,
                Node {
                    op: rec.op,
                    inputs: rec.inputs,
                },
            )
            .is_some()
        {
            return Err(ParseError::DuplicateId(rec.id));
        }
    }
    Ok(ComputationGraph {
        inputs: file.inputs,
        nodes,
        outputs: file.outputs,
        blocks: file.blocks,
    })
}

pub fn from_json(text: &str) -> Result<ComputationGraph, ParseError> {
    deserialize(text.as_bytes())
}

/// Graphviz rendering; blocks become clusters.
pub fn to_dot(graph: &ComputationGraph) -> String {
    let mut s =
        String::from("digraph G {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
    for input in &graph.inputs {
        let _ = writeln!(
            s,
            "  {} [label=\"input {}\", shape=ellipse];",
            input.id, input.shape
        );
    }
    let mut in_block = std::collections::BTreeSet::new();
    for (i, block) in graph.blocks.iter().enumerate() {
        let _ = writeln!(s, "  subgraph cluster_{i} {{");
        let _ = writeln!(s, "    label=\"{} [{}]\";", block.label, block.block_type);
        for n in &block.nodes {
            if let Some(node) = graph.nodes.get(n) {
                let style = if block.frozen.contains(n) {
                    ", style=dashed"
                } else {
                    ""
                };
                let _ = writeln!(s, "    {n} [label=\"{}\"{style}];", node.op);
                in_block.insert(*n);
            }
        }
        s.push_str("  }\n");
    }
    for (id, node) in &graph.nodes {
        if !in_block.contains(id) {
            let _ = writeln!(s, "  {id} [label=\"{}\"];", node.op);
        }
    }
    for (id, node) in &graph.nodes {
        for (slot, src) in node.inputs.iter().enumerate() {
            if node.inputs.len() > 1 {
                let _ = writeln!(s, "  {src} -> {id} [label=\"{slot}\"];");
            } else {
                let _ = writeln!(s, "  {src} -> {id};");
            }
        }
    }
    for (i, out) in graph.outputs.iter().enumerate() {
        let _ = writeln!(s, "  out{i} [label=\"output {i}\", shape=ellipse];");
        let _ = writeln!(s, "  {out} -> out{i};");
    }
    s.push_str("}\n");
    s
}
