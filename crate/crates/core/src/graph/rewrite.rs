use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use super::ir::{ComputationGraph, Edge, Endpoint, GraphError, GraphInput, NodeId};
use super::op::PrimitiveOp;

/// A connected, convex set of nodes together with the edges crossing its boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphSelection {
    pub nodes: BTreeSet<NodeId>,
    pub boundary_inputs: Vec<Edge>,
    pub boundary_outputs: Vec<Edge>,
}

impl SubgraphSelection {
    /// Builds the selection and checks connectivity and convexity.
    pub fn from_nodes(
        graph: &ComputationGraph,
        nodes: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self, GraphError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(GraphError::Selection("empty selection".into()));
        }
        for &n in &nodes {
            graph.node(n)?;
        }
        if !is_connected(graph, &nodes) {
            return Err(GraphError::Selection("selection is not connected".into()));
        }
        if !is_convex(graph, &nodes) {
            return Err(GraphError::Selection("selection is not convex".into()));
        }
        let order = graph
            .topo_order()
            .map_err(|_| GraphError::Selection("graph has a cycle".into()))?;
        let mut boundary_inputs = Vec::new();
        let mut boundary_outputs = Vec::new();
        let consumers = graph.consumers();
        for &id in order.iter().filter(|n| nodes.contains(n)) {
            for (slot, &src) in graph.nodes[&id].inputs.iter().enumerate() {
                if !nodes.contains(&src) {
                    boundary_inputs.push(Edge {
                        src,
                        dst: Endpoint::Node { id, slot },
                    });
                }
            }
            for &dst in consumers.get(&id).into_iter().flatten() {
                let leaves = match dst {
                    Endpoint::Node { id: c, .. } => !nodes.contains(&c),
                    Endpoint::Output(_) => true,
                };
                if leaves {
                    boundary_outputs.push(Edge { src: id, dst });
                }
            }
        }
        Ok(Self {
            nodes,
            boundary_inputs,
            boundary_outputs,
        })
    }

    /// The selection as a standalone graph: crossing sources become inputs, values read
    /// outside become outputs. Node ids are kept.
    pub fn to_graph(&self, graph: &ComputationGraph) -> Result<ComputationGraph, GraphError> {
        let shapes = graph.shapes()?;
        let mut sub = ComputationGraph::default();
        for e in &self.boundary_inputs {
            if !sub.inputs.iter().any(|i| i.id == e.src) {
                sub.inputs.push(GraphInput {
                    id: e.src,
                    shape: shapes[&e.src].clone(),
                });
            }
        }
        for &n in &self.nodes {
            sub.nodes.insert(n, graph.nodes[&n].clone());
        }
        for e in &self.boundary_outputs {
            if !sub.outputs.contains(&e.src) {
                sub.outputs.push(e.src);
            }
        }
        Ok(sub)
    }
}

fn is_connected(graph: &ComputationGraph, nodes: &BTreeSet<NodeId>) -> bool {
    let Some(&start) = nodes.iter().next() else {
        return true;
    };
    let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &n in nodes {
        for &src in &graph.nodes[&n].inputs {
            if nodes.contains(&src) {
                adjacency.entry(n).or_default().push(src);
                adjacency.entry(src).or_default().push(n);
            }
        }
    }
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &m in adjacency.get(&n).into_iter().flatten() {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen.len() == nodes.len()
}

/// No path leaves the set and re-enters it.
fn is_convex(graph: &ComputationGraph, nodes: &BTreeSet<NodeId>) -> bool {
    let consumers = graph.consumers();
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    let mut seen = BTreeSet::new();
    for &n in nodes {
        for e in consumers.get(&n).into_iter().flatten() {
            if let Endpoint::Node { id, .. } = *e {
                if !nodes.contains(&id) && seen.insert(id) {
                    queue.push_back(id);
                }
            }
        }
    }
    while let Some(n) = queue.pop_front() {
        for e in consumers.get(&n).into_iter().flatten() {
            if let Endpoint::Node { id, .. } = *e {
                if nodes.contains(&id) {
                    return false;
                }
                if seen.insert(id) {
                    queue.push_back(id);
                }
            }
        }
    }
    true
}

/// Size distribution of sampled selections: a geometric stop after each added node.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SizeDistribution {
    pub mean: f64,
}

impl Default for SizeDistribution {
    fn default() -> Self {
        Self { mean: 3.0 }
    }
}

/// Random-walk selection inside the mutable part of block `block`.
pub fn select_subgraph<R: Rng + ?Sized>(
    graph: &ComputationGraph,
    block: usize,
    rng: &mut R,
    size: SizeDistribution,
) -> Result<SubgraphSelection, GraphError> {
    let b = graph.blocks.get(block).ok_or(GraphError::NoBlock(block))?;
    let mutable: BTreeSet<NodeId> = b.mutable_nodes().into_iter().collect();
    if mutable.is_empty() {
        return Err(GraphError::BlockEmpty(b.label.clone()));
    }
    let pool: Vec<NodeId> = mutable.iter().copied().collect();
    let seed = *pool.choose(rng).expect("nonempty");
    let mut chosen = BTreeSet::from([seed]);
    let stop = (1.0 / size.mean.max(1.0)).clamp(0.0, 1.0);
    let consumers = graph.consumers();
    loop {
        if rng.gen_bool(stop) {
            break;
        }
        let mut candidates = BTreeSet::new();
        for &n in &chosen {
            for &src in &graph.nodes[&n].inputs {
                candidates.insert(src);
            }
            for e in consumers.get(&n).into_iter().flatten() {
                if let Endpoint::Node { id, .. } = *e {
                    candidates.insert(id);
                }
            }
        }
        let candidates: Vec<NodeId> = candidates
            .into_iter()
            .filter(|c| mutable.contains(c) && !chosen.contains(c))
            .filter(|c| {
                let mut grown = chosen.clone();
                grown.insert(*c);
                is_convex(graph, &grown)
            })
            .collect();
        match candidates.choose(rng) {
            Some(&c) => {
                chosen.insert(c);
            }
            None => break,
        }
    }
    SubgraphSelection::from_nodes(graph, chosen)
}

/// Sequential chains plus the multi-input connectors between them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub chains: Vec<Vec<NodeId>>,
    pub connectors: Vec<NodeId>,
}

impl Decomposition {
    /// Rebuilds the selection from the chains and connectors alone.
    pub fn reassemble(
        &self,
        graph: &ComputationGraph,
        selection: &SubgraphSelection,
    ) -> Result<ComputationGraph, GraphError> {
        let shapes = graph.shapes()?;
        let mut out = ComputationGraph::default();
        let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for e in &selection.boundary_inputs {
            if !map.contains_key(&e.src) {
                let id = NodeId(out.inputs.len() as u32);
                out.inputs.push(GraphInput {
                    id,
                    shape: shapes[&e.src].clone(),
                });
                map.insert(e.src, id);
            }
        }
        let mut next = out.inputs.len() as u32 + 1000;
        // Process units in topological order of their first node.
        let order = graph.topo_order().unwrap_or_default();
        let rank: BTreeMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        enum Unit<'a> {
            Chain(&'a [NodeId]),
            Connector(NodeId),
        }
        let mut units: Vec<(usize, Unit)> = self
            .chains
            .iter()
            .map(|c| (rank[&c[0]], Unit::Chain(c)))
            .chain(
                self.connectors
                    .iter()
                    .map(|&c| (rank[&c], Unit::Connector(c))),
            )
            .collect();
        units.sort_by_key(|(r, _)| *r);
        for (_, unit) in units {
            match unit {
                Unit::Chain(chain) => {
                    let head_src = graph.nodes[&chain[0]].inputs[0];
                    let mut prev = *map
                        .get(&head_src)
                        .ok_or(GraphError::Selection("chain source not available".into()))?;
                    for &n in chain {
                        let id = NodeId(next);
                        next += 1;
                        out.nodes.insert(
                            id,
                            super::ir::Node {
                                op: graph.nodes[&n].op.clone(),
                                inputs: vec![prev],
                            },
                        );
                        map.insert(n, id);
                        prev = id;
                    }
                }
                Unit::Connector(c) => {
                    let node = &graph.nodes[&c];
                    let inputs = node
                        .inputs
                        .iter()
                        .map(|s| {
                            map.get(s)
                                .copied()
                                .ok_or(GraphError::Selection("connector operand missing".into()))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let id = NodeId(next);
                    next += 1;
                    out.nodes.insert(
                        id,
                        super::ir::Node {
                            op: node.op.clone(),
                            inputs,
                        },
                    );
                    map.insert(c, id);
                }
            }
        }
        for e in &selection.boundary_outputs {
            let id = map[&e.src];
            if !out.outputs.contains(&id) {
                out.outputs.push(id);
            }
        }
        Ok(out)
    }
}

/// Splits a selection into maximal single-input/single-output chains and connectors.
pub fn decompose_sequential(
    graph: &ComputationGraph,
    selection: &SubgraphSelection,
) -> Decomposition {
    let order = graph.topo_order().unwrap_or_default();
    let consumers = graph.consumers();
    let in_sel = |n: &NodeId| selection.nodes.contains(n);
    let is_connector = |n: NodeId| !graph.nodes[&n].op.is_simple();
    // v continues u's chain when u feeds only v.
    let continues = |v: NodeId| -> Option<NodeId> {
        if is_connector(v) {
            return None;
        }
        let u = graph.nodes[&v].inputs[0];
        if !in_sel(&u) || is_connector(u) {
            return None;
        }
        let uses = consumers.get(&u).map(|c| c.len()).unwrap_or(0);
        (uses == 1).then_some(u)
    };
    let mut next_in_chain: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut heads = Vec::new();
    let mut connectors = Vec::new();
    for &n in order.iter().filter(|n| in_sel(n)) {
        if is_connector(n) {
            connectors.push(n);
        } else if let Some(u) = continues(n) {
            next_in_chain.insert(u, n);
        } else {
            heads.push(n);
        }
    }
    let chains = heads
        .into_iter()
        .map(|h| {
            let mut chain = vec![h];
            while let Some(&n) = next_in_chain.get(chain.last().expect("nonempty")) {
                chain.push(n);
            }
            chain
        })
        .collect();
    Decomposition { chains, connectors }
}

/// Replaces each chain of `decomposition` by the matching op sequence. Connectors and
/// everything outside the selection keep their ids and ops. A non-empty replacement
/// reuses the old tail id; an empty one forwards the chain's source to its consumers.
pub fn replace_subgraph(
    graph: &ComputationGraph,
    decomposition: &Decomposition,
    replacements: &[Vec<PrimitiveOp>],
) -> Result<ComputationGraph, GraphError> {
    if replacements.len() != decomposition.chains.len() {
        return Err(GraphError::BoundaryMismatch {
            expected: decomposition.chains.len(),
            found: replacements.len(),
        });
    }
    for op in replacements.iter().flatten() {
        if !op.is_simple() {
            return Err(GraphError::NotSimple(op.to_string()));
        }
    }
    let mut g = graph.clone();
    let mut forward: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut next = g.next_id().0;
    for (chain, ops) in decomposition.chains.iter().zip(replacements) {
        let head = chain[0];
        let tail = *chain.last().expect("nonempty chain");
        let source = graph.node(head)?.inputs[0];
        let block = g.block_of(head);
        for &n in chain {
            g.nodes.remove(&n);
            for b in &mut g.blocks {
                b.nodes.retain(|m| *m != n);
            }
        }
        if ops.is_empty() {
            forward.insert(tail, source);
            continue;
        }
        let mut prev = source;
        let mut new_ids = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            let id = if i + 1 == ops.len() {
                tail
            } else {
                let id = NodeId(next);
                next += 1;
                id
            };
            g.nodes.insert(
                id,
                super::ir::Node {
                    op: op.clone(),
                    inputs: vec![prev],
                },
            );
            new_ids.push(id);
            prev = id;
        }
        if let Some(b) = block {
            g.blocks[b].nodes.extend(new_ids);
        }
    }
    if !forward.is_empty() {
        let resolve = |mut id: NodeId| {
            while let Some(&to) = forward.get(&id) {
                id = to;
            }
            id
        };
        for node in g.nodes.values_mut() {
            for src in &mut node.inputs {
                *src = resolve(*src);
            }
        }
        for out in &mut g.outputs {
            *out = resolve(*out);
        }
    }
    g.ensure_valid()?;
    g.sort_blocks();
    g.retag_blocks()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::op::Features;
    use crate::graph::shape::TensorShape;
    use crate::graph::Block;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    fn chain_graph(ops: &[PrimitiveOp]) -> ComputationGraph {
        let mut g = ComputationGraph::new(vec![shape(&[1, 8, 8, 4])]);
        let out = g.add_chain(NodeId(0), ops);
        g.outputs = vec![out];
        g.blocks.push(Block {
            label: "b0".into(),
            block_type: String::new(),
            nodes: g.nodes.keys().copied().collect(),
            frozen: vec![],
        });
        g.retag_blocks().unwrap();
        g
    }

    fn residual() -> ComputationGraph {
        // x -> conv -> relu -> add(.., x)
        let mut g = ComputationGraph::new(vec![shape(&[1, 8, 8, 4])]);
        let c = g.add_node(
            PrimitiveOp::Convolution {
                features: Features::SAME,
                kernel: 3,
                stride: 1,
            },
            vec![NodeId(0)],
        );
        let r = g.add_node(PrimitiveOp::ReLU, vec![c]);
        let a = g.add_node(PrimitiveOp::Add, vec![r, NodeId(0)]);
        g.outputs = vec![a];
        g
    }

    #[test]
    fn singleton_block_selects_its_node() {
        let g = chain_graph(&[PrimitiveOp::ReLU]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = select_subgraph(&g, 0, &mut rng, SizeDistribution::default()).unwrap();
        assert_eq!(s.nodes.len(), 1);
    }

    #[test]
    fn selection_is_reproducible_and_contiguous() {
        let g = chain_graph(&[
            PrimitiveOp::ReLU,
            PrimitiveOp::BatchNorm,
            PrimitiveOp::SiLU,
            PrimitiveOp::LayerNorm,
            PrimitiveOp::GeLU,
        ]);
        let pick = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            select_subgraph(&g, 0, &mut rng, SizeDistribution::default()).unwrap()
        };
        let a = pick();
        assert_eq!(a, pick());
        let ids: Vec<u32> = a.nodes.iter().map(|n| n.0).collect();
        assert!(ids.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn non_convex_selection_is_rejected() {
        let g = residual();
        // {conv, add} skips relu which leaves and re-enters
        assert!(SubgraphSelection::from_nodes(&g, [NodeId(1), NodeId(3)]).is_err());
    }

    #[test]
    fn decomposition_cases() {
        let g = chain_graph(&[PrimitiveOp::ReLU, PrimitiveOp::Sigmoid]);
        let s = SubgraphSelection::from_nodes(&g, [NodeId(1), NodeId(2)]).unwrap();
        let d = decompose_sequential(&g, &s);
        assert_eq!(d.chains, vec![vec![NodeId(1), NodeId(2)]]);
        assert!(d.connectors.is_empty());

        let g = residual();
        let s = SubgraphSelection::from_nodes(&g, [NodeId(3)]).unwrap();
        let d = decompose_sequential(&g, &s);
        assert!(d.chains.is_empty());
        assert_eq!(d.connectors, vec![NodeId(3)]);
    }

    #[test]
    fn self_replacement_is_isomorphic() {
        let g = residual();
        let s = SubgraphSelection::from_nodes(&g, [NodeId(1), NodeId(2), NodeId(3)]).unwrap();
        let d = decompose_sequential(&g, &s);
        let same: Vec<Vec<PrimitiveOp>> = d
            .chains
            .iter()
            .map(|c| c.iter().map(|n| g.nodes[n].op.clone()).collect())
            .collect();
        let h = replace_subgraph(&g, &d, &same).unwrap();
        assert!(h.isomorphic(&g));
        assert!(d
            .reassemble(&g, &s)
            .unwrap()
            .isomorphic(&s.to_graph(&g).unwrap()));
    }

    #[test]
    fn wrong_chain_count_is_a_boundary_mismatch() {
        let g = residual();
        let s = SubgraphSelection::from_nodes(&g, [NodeId(1)]).unwrap();
        let d = decompose_sequential(&g, &s);
        assert!(matches!(
            replace_subgraph(&g, &d, &[]),
            Err(GraphError::BoundaryMismatch { .. })
        ));
    }

    #[test]
    fn empty_replacement_forwards_source() {
        let g = chain_graph(&[PrimitiveOp::ReLU, PrimitiveOp::Sigmoid, PrimitiveOp::SiLU]);
        let s = SubgraphSelection::from_nodes(&g, [NodeId(2)]).unwrap();
        let d = decompose_sequential(&g, &s);
        let h = replace_subgraph(&g, &d, &[vec![]]).unwrap();
        assert_eq!(h.nodes.len(), 2);
        assert_eq!(h.nodes[&NodeId(3)].inputs, vec![NodeId(1)]);
    }
}
