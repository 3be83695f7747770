use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::op::PrimitiveOp;
use super::shape::{ShapeError, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub op: PrimitiveOp,
    pub inputs: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInput {
    pub id: NodeId,
    pub shape: TensorShape,
}

/// A labeled group of nodes. `frozen` nodes (e.g. a residual Add) belong to the
/// block but are never selected for mutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    #[serde(rename = "type", default)]
    pub block_type: String,
    pub nodes: Vec<NodeId>,
    #[serde(default)]
    pub frozen: Vec<NodeId>,
}

impl Block {
    pub fn mutable_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .copied()
            .filter(|n| !self.frozen.contains(n))
            .collect()
    }
}

/// Where a value flows: into operand `slot` of a node, or into a graph output position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node { id: NodeId, slot: usize },
    Output(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateId(NodeId),
    UnknownOperand {
        node: NodeId,
        operand: NodeId,
    },
    Arity {
        node: NodeId,
        expected: usize,
        found: usize,
    },
    Params {
        node: NodeId,
        reason: String,
    },
    Cycle(Vec<NodeId>),
    Unreachable(NodeId),
    Shape {
        node: NodeId,
        reason: String,
    },
    NoOutputs,
    UnknownOutput(NodeId),
    BlockUnknownNode {
        block: String,
        node: NodeId,
    },
    BlockOverlap {
        node: NodeId,
    },
    FrozenOutsideBlock {
        block: String,
        node: NodeId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::UnknownOperand { node, operand } => {
                write!(f, "{node} reads unknown value {operand}")
            }
            Violation::Arity {
                node,
                expected,
                found,
            } => write!(f, "{node} expects {expected} operand(s) but has {found}"),
            Violation::Params { node, reason } => write!(f, "{node}: {reason}"),
            Violation::Cycle(nodes) => write!(f, "cycle through {nodes:?}"),
            Violation::Unreachable(id) => write!(f, "{id} is not reachable from any input"),
            Violation::Shape { node, reason } => write!(f, "{node}: {reason}"),
            Violation::NoOutputs => write!(f, "graph has no outputs"),
            Violation::UnknownOutput(id) => write!(f, "output references unknown value {id}"),
            Violation::BlockUnknownNode { block, node } => {
                write!(f, "block {block} lists unknown node {node}")
            }
            Violation::BlockOverlap { node } => write!(f, "{node} belongs to several blocks"),
            Violation::FrozenOutsideBlock { block, node } => {
                write!(f, "block {block} freezes {node} which it does not contain")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid graph:\n{0}")]
    Invalid(ValidationReport),
    #[error("shape error at {node}: {source}")]
    Shape {
        node: NodeId,
        #[source]
        source: ShapeError,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no block with index {0}")]
    NoBlock(usize),
    #[error("block {0} has no mutable nodes")]
    BlockEmpty(String),
    #[error("selection is not valid: {0}")]
    Selection(String),
    #[error("expected {expected} replacement chain(s), got {found}")]
    BoundaryMismatch { expected: usize, found: usize },
    #[error("replacement op {0} is not a single-input op")]
    NotSimple(String),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ComputationGraph {
    pub inputs: Vec<GraphInput>,
    pub nodes: BTreeMap<NodeId, Node>,
    pub outputs: Vec<NodeId>,
    pub blocks: Vec<Block>,
}

impl ComputationGraph {
    pub fn new(input_shapes: Vec<TensorShape>) -> Self {
        let inputs = input_shapes
            .into_iter()
            .enumerate()
            .map(|(i, shape)| GraphInput {
                id: NodeId(i as u32),
                shape,
            })
            .collect();
        Self {
            inputs,
            ..Self::default()
        }
    }

    /// Identity program: one input, no nodes, the input is the output.
    pub fn identity(shape: TensorShape) -> Self {
        let mut g = Self::new(vec![shape]);
        g.outputs = vec![NodeId(0)];
        g
    }

    pub fn input_id(&self, index: usize) -> NodeId {
        self.inputs[index].id
    }

    pub fn next_id(&self) -> NodeId {
        let max_node = self.nodes.keys().next_back().map(|n| n.0);
        let max_input = self.inputs.iter().map(|i| i.id.0).max();
        match max_node.max(max_input) {
            Some(m) => NodeId(m + 1),
            None => NodeId(0),
        }
    }

    pub fn add_node(&mut self, op: PrimitiveOp, inputs: Vec<NodeId>) -> NodeId {
        let id = self.next_id();
        self.nodes.insert(id, Node { op, inputs });
        id
    }

    /// Appends a chain of simple ops after `from` and returns the id of the last value.
    pub fn add_chain(&mut self, from: NodeId, ops: &[PrimitiveOp]) -> NodeId {
        ops.iter()
            .fold(from, |prev, op| self.add_node(op.clone(), vec![prev]))
    }

    pub fn is_input(&self, id: NodeId) -> bool {
        self.inputs.iter().any(|i| i.id == id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.is_input(id) || self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    /// Every consumer edge of every value, graph outputs included.
    pub fn consumers(&self) -> BTreeMap<NodeId, Vec<Endpoint>> {
        let mut map: BTreeMap<NodeId, Vec<Endpoint>> = BTreeMap::new();
        for (&id, node) in &self.nodes {
            for (slot, &src) in node.inputs.iter().enumerate() {
                map.entry(src)
                    .or_default()
                    .push(Endpoint::Node { id, slot });
            }
        }
        for (i, &out) in self.outputs.iter().enumerate() {
            map.entry(out).or_default().push(Endpoint::Output(i));
        }
        map
    }

    /// Kahn order over nodes (lowest id first among ready nodes). Err carries the nodes
    /// left on a cycle or behind unknown operands.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, Vec<NodeId>> {
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&id, node) in &self.nodes {
            let mut deg = 0;
            for &src in &node.inputs {
                if self.nodes.contains_key(&src) {
                    deg += 1;
                    succ.entry(src).or_default().push(id);
                } else if !self.is_input(src) {
                    // unknown operand: never becomes ready
                    deg += 1;
                }
            }
            indegree.insert(id, deg);
        }
        let mut ready: BTreeSet<NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for &next in succ.get(&id).map(|v| v.as_slice()).unwrap_or(&[]) {
                let d = indegree.get_mut(&next).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(next);
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            let done: BTreeSet<NodeId> = order.into_iter().collect();
            Err(self
                .nodes
                .keys()
                .copied()
                .filter(|n| !done.contains(n))
                .collect())
        }
    }

    /// Shapes of every value (inputs included). Requires a well-formed graph.
    pub fn shapes(&self) -> Result<BTreeMap<NodeId, TensorShape>, GraphError> {
        let order = self.topo_order().map_err(|left| {
            GraphError::Invalid(ValidationReport {
                violations: vec![Violation::Cycle(left)],
            })
        })?;
        let mut shapes: BTreeMap<NodeId, TensorShape> = self
            .inputs
            .iter()
            .map(|i| (i.id, i.shape.clone()))
            .collect();
        for id in order {
            let node = &self.nodes[&id];
            let operands: Vec<&TensorShape> = node
                .inputs
                .iter()
                .map(|src| shapes.get(src).ok_or(GraphError::UnknownNode(*src)))
                .collect::<Result<_, _>>()?;
            let out = node
                .op
                .output_shape(&operands)
                .map_err(|source| GraphError::Shape { node: id, source })?;
            shapes.insert(id, out);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let mut seen = BTreeSet::new();
        for input in &self.inputs {
            if !seen.insert(input.id) || self.nodes.contains_key(&input.id) {
                v.push(Violation::DuplicateId(input.id));
            }
        }
        let mut references_ok = true;
        for (&id, node) in &self.nodes {
            if node.inputs.len() != node.op.arity() {
                v.push(Violation::Arity {
                    node: id,
                    expected: node.op.arity(),
                    found: node.inputs.len(),
                });
                references_ok = false;
            }
            if let Err(e) = node.op.check_params() {
                v.push(Violation::Params {
                    node: id,
                    reason: e.to_string(),
                });
                references_ok = false;
            }
            for &src in &node.inputs {
                if !self.contains(src) {
                    v.push(Violation::UnknownOperand {
                        node: id,
                        operand: src,
                    });
                    references_ok = false;
                }
            }
        }
        if self.outputs.is_empty() {
            v.push(Violation::NoOutputs);
        }
        for &out in &self.outputs {
            if !self.contains(out) {
                v.push(Violation::UnknownOutput(out));
            }
        }
        match self.topo_order() {
            Err(left) if references_ok => v.push(Violation::Cycle(left)),
            Err(_) => {}
            Ok(_) if references_ok => {
                // reachability from inputs
                let mut reach: BTreeSet<NodeId> = self.inputs.iter().map(|i| i.id).collect();
                for id in self.topo_order().unwrap_or_default() {
                    if self.nodes[&id].inputs.iter().any(|s| reach.contains(s)) {
                        reach.insert(id);
                    }
                }
                for &id in self.nodes.keys() {
                    if !reach.contains(&id) {
                        v.push(Violation::Unreachable(id));
                    }
                }
                if let Err(e) = self.shapes() {
                    let (node, reason) = match e {
                        GraphError::Shape { node, source } => (node, source.to_string()),
                        other => (NodeId(u32::MAX), other.to_string()),
                    };
                    v.push(Violation::Shape { node, reason });
                }
            }
            Ok(_) => {}
        }
        let mut owner: BTreeSet<NodeId> = BTreeSet::new();
        for block in &self.blocks {
            for &n in &block.nodes {
                if !self.nodes.contains_key(&n) {
                    v.push(Violation::BlockUnknownNode {
                        block: block.label.clone(),
                        node: n,
                    });
                }
                if !owner.insert(n) {
                    v.push(Violation::BlockOverlap { node: n });
                }
            }
            for &n in &block.frozen {
                if !block.nodes.contains(&n) {
                    v.push(Violation::FrozenOutsideBlock {
                        block: block.label.clone(),
                        node: n,
                    });
                }
            }
        }
        ValidationReport { violations: v }
    }

    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(GraphError::Invalid(report))
        }
    }

    /// Values outside the block that feed it, and block values read outside it.
    pub fn block_boundary(&self, index: usize) -> Result<(Vec<NodeId>, Vec<NodeId>), GraphError> {
        let block = self.blocks.get(index).ok_or(GraphError::NoBlock(index))?;
        let members: BTreeSet<NodeId> = block.nodes.iter().copied().collect();
        let mut sources = Vec::new();
        for &n in &block.nodes {
            for &src in &self.node(n)?.inputs {
                if !members.contains(&src) && !sources.contains(&src) {
                    sources.push(src);
                }
            }
        }
        let consumers = self.consumers();
        let mut exits = Vec::new();
        for &n in &block.nodes {
            let outside = consumers.get(&n).into_iter().flatten().any(|e| match e {
                Endpoint::Node { id, .. } => !members.contains(id),
                Endpoint::Output(_) => true,
            });
            if outside {
                exits.push(n);
            }
        }
        Ok((sources, exits))
    }

    /// Recomputes every block's type tag from its op-kind sequence and boundary shapes.
    pub fn retag_blocks(&mut self) -> Result<(), GraphError> {
        let shapes = self.shapes()?;
        let order = self.topo_order().unwrap_or_default();
        let position: BTreeMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut tags = Vec::with_capacity(self.blocks.len());
        for index in 0..self.blocks.len() {
            let (sources, exits) = self.block_boundary(index)?;
            let mut members = self.blocks[index].nodes.clone();
            members.sort_by_key(|n| position.get(n).copied().unwrap_or(usize::MAX));
            let mut hasher = Sha256::new();
            for n in &members {
                hasher.update(self.nodes[n].op.kind().name().as_bytes());
                hasher.update(b";");
            }
            hasher.update(b"|");
            for s in sources.iter().chain(exits.iter()) {
                hasher.update(shapes[s].to_string().as_bytes());
                hasher.update(b";");
            }
            let digest = hasher.finalize();
            let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
            tags.push(hex);
        }
        for (block, tag) in self.blocks.iter_mut().zip(tags) {
            block.block_type = tag;
        }
        Ok(())
    }

    /// Index of the block containing `node`, if any.
    pub fn block_of(&self, node: NodeId) -> Option<usize> {
        self.blocks.iter().position(|b| b.nodes.contains(&node))
    }

    /// Sorts block member lists into topological order.
    pub fn sort_blocks(&mut self) {
        let order = self.topo_order().unwrap_or_default();
        let position: BTreeMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        for block in &mut self.blocks {
            block
                .nodes
                .sort_by_key(|n| position.get(n).copied().unwrap_or(usize::MAX));
            block
                .frozen
                .sort_by_key(|n| position.get(n).copied().unwrap_or(usize::MAX));
        }
    }

    /// Renames every value into a canonical numbering (inputs first, then topological),
    /// so that structurally equal graphs compare equal.
    pub fn canonical_form(&self) -> Option<Vec<(String, Vec<usize>)>> {
        let mut index: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut form = Vec::new();
        for (i, input) in self.inputs.iter().enumerate() {
            index.insert(input.id, i);
            form.push((format!("input{}", input.shape), vec![]));
        }
        // depth-first from outputs so numbering does not depend on node ids
        let mut visiting = BTreeSet::new();
        fn visit(
            g: &ComputationGraph,
            id: NodeId,
            index: &mut BTreeMap<NodeId, usize>,
            form: &mut Vec<(String, Vec<usize>)>,
            visiting: &mut BTreeSet<NodeId>,
        ) -> Option<usize> {
            if let Some(&i) = index.get(&id) {
                return Some(i);
            }
            if !visiting.insert(id) {
                return None;
            }
            let node = g.nodes.get(&id)?;
            let mut operands = Vec::new();
            for &src in &node.inputs {
                operands.push(visit(g, src, index, form, visiting)?);
            }
            let i = form.len();
            form.push((format!("{:?}", node.op), operands));
            index.insert(id, i);
            Some(i)
        }
        let mut outs = Vec::new();
        for &out in &self.outputs {
            outs.push(visit(self, out, &mut index, &mut form, &mut visiting)?);
        }
        if index.len() != self.inputs.len() + self.nodes.len() {
            // dead nodes: compare them by sorted debug form
            let mut dead: Vec<String> = self
                .nodes
                .iter()
                .filter(|(id, _)| !index.contains_key(id))
                .map(|(_, n)| format!("{:?}", n.op))
                .collect();
            dead.sort();
            for d in dead {
                form.push((format!("dead:{d}"), vec![]));
            }
        }
        form.push(("outputs".into(), outs));
        Some(form)
    }

    pub fn isomorphic(&self, other: &ComputationGraph) -> bool {
        match (self.canonical_form(), other.canonical_form()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Nodes reachable by following consumer edges from `start` (exclusive).
    pub fn descendants(&self, start: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let consumers = self.consumers();
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = start.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            for e in consumers.get(&n).into_iter().flatten() {
                if let Endpoint::Node { id, .. } = e {
                    if seen.insert(*id) {
                        queue.push_back(*id);
                    }
                }
            }
        }
        seen
    }
}
