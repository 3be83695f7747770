use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mutate::{mutate_properties, PropertyMutation};
use crate::graph::{
    decompose_sequential, replace_subgraph, select_subgraph, Block, ComputationGraph, GraphError,
    Node, NodeId, PrimitiveOp, SizeDistribution, SubgraphSelection,
};
use crate::properties::TargetSpec;
use crate::synth::{chain_targets, synthesize_replacement, SynthConfig, SynthError};

/// Relative weights of the three block-level mutation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationWeights {
    pub subgraph: f64,
    pub delete: f64,
    pub duplicate: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self {
            subgraph: 0.8,
            delete: 0.1,
            duplicate: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    pub weights: MutationWeights,
    /// Probability that a subgraph mutation is copied into each other block of the same type.
    pub share_prob: f64,
    pub property: PropertyMutation,
    pub size: SizeDistribution,
    /// Fresh property mutations tried after an infeasible one.
    pub resamples: usize,
    pub synth: SynthConfig,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            weights: MutationWeights::default(),
            share_prob: 0.5,
            property: PropertyMutation::default(),
            size: SizeDistribution::default(),
            resamples: 3,
            synth: SynthConfig::default(),
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.property.validate()?;
        if !(0.0..=1.0).contains(&self.share_prob) {
            return Err(format!(
                "share_prob = {} is not a probability",
                self.share_prob
            ));
        }
        let w = self.weights;
        if [w.subgraph, w.delete, w.duplicate]
            .iter()
            .any(|x| !(*x >= 0.0))
            || w.subgraph + w.delete + w.duplicate <= 0.0
        {
            return Err("mutation weights must be nonnegative with a positive sum".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationRecord {
    Subgraph {
        block: String,
        nodes: Vec<NodeId>,
        targets: Vec<TargetSpec>,
        sequences: Vec<Vec<PrimitiveOp>>,
        /// Other blocks that received the same rewrite.
        shared: Vec<String>,
    },
    DeleteBlock {
        block: String,
    },
    DuplicateBlock {
        block: String,
        copy: String,
        after: NodeId,
    },
}

#[derive(Debug, Error)]
pub enum MutateError {
    #[error("graph has no blocks")]
    NoBlocks,
    #[error("no block admits this mutation")]
    NoCandidate,
    #[error("selection contains no sequential chain")]
    NoChain,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// One random block-level mutation. The child validates or an error is returned.
pub fn mutate_individual<R: Rng + ?Sized>(
    graph: &ComputationGraph,
    rng: &mut R,
    cfg: &MutationConfig,
) -> Result<(ComputationGraph, MutationRecord), MutateError> {
    if graph.blocks.is_empty() {
        return Err(MutateError::NoBlocks);
    }
    let w = cfg.weights;
    let roll = rng.gen_range(0.0..w.subgraph + w.delete + w.duplicate);
    let (mut child, record) = if roll < w.subgraph {
        subgraph_mutation(graph, rng, cfg)?
    } else if roll < w.subgraph + w.delete {
        let candidates: Vec<usize> = (0..graph.blocks.len())
            .filter(|&b| graph.blocks.len() > 1 && passthrough(graph, b).is_some())
            .collect();
        let &b = candidates.choose(rng).ok_or(MutateError::NoCandidate)?;
        delete_block(graph, b)?
    } else {
        let candidates: Vec<usize> = (0..graph.blocks.len())
            .filter(|&b| passthrough(graph, b).is_some())
            .collect();
        let &b = candidates.choose(rng).ok_or(MutateError::NoCandidate)?;
        let sites = duplicate_sites(graph, b);
        let &at = sites.choose(rng).ok_or(MutateError::NoCandidate)?;
        duplicate_block(graph, b, at)?
    };
    child.sort_blocks();
    child.retag_blocks()?;
    child.ensure_valid()?;
    Ok((child, record))
}

/// Single source and single exit with equal shapes: the block can be removed or repeated.
fn passthrough(graph: &ComputationGraph, block: usize) -> Option<(NodeId, NodeId)> {
    let (sources, exits) = graph.block_boundary(block).ok()?;
    if sources.len() != 1 || exits.len() != 1 {
        return None;
    }
    let shapes = graph.shapes().ok()?;
    (shapes[&sources[0]] == shapes[&exits[0]]).then_some((sources[0], exits[0]))
}

fn redirect(graph: &mut ComputationGraph, from: NodeId, to: NodeId, skip: &BTreeSet<NodeId>) {
    for (id, node) in graph.nodes.iter_mut() {
        if skip.contains(id) {
            continue;
        }
        for src in node.inputs.iter_mut() {
            if *src == from {
                *src = to;
            }
        }
    }
    for out in graph.outputs.iter_mut() {
        if *out == from {
            *out = to;
        }
    }
}

/// Removes a pass-through block and wires its consumers to its source. The last
/// remaining block is never deleted.
pub fn delete_block(
    graph: &ComputationGraph,
    block: usize,
) -> Result<(ComputationGraph, MutationRecord), MutateError> {
    if graph.blocks.len() < 2 {
        return Err(MutateError::NoCandidate);
    }
    let (source, exit) = passthrough(graph, block).ok_or(MutateError::NoCandidate)?;
    let mut g = graph.clone();
    let removed = g.blocks.remove(block);
    for n in &removed.nodes {
        g.nodes.remove(n);
    }
    redirect(&mut g, exit, source, &BTreeSet::new());
    Ok((
        g,
        MutationRecord::DeleteBlock {
            block: removed.label,
        },
    ))
}

/// Values a copy of `block` may be inserted after: same shape as the block's boundary,
/// outside every block or at a block's exit.
pub fn duplicate_sites(graph: &ComputationGraph, block: usize) -> Vec<NodeId> {
    let Some((source, _)) = passthrough(graph, block) else {
        return Vec::new();
    };
    let Ok(shapes) = graph.shapes() else {
        return Vec::new();
    };
    let exits: BTreeSet<NodeId> = (0..graph.blocks.len())
        .filter_map(|b| graph.block_boundary(b).ok())
        .flat_map(|(_, e)| e)
        .collect();
    let want = &shapes[&source];
    graph
        .topo_order()
        .unwrap_or_default()
        .into_iter()
        .filter(|v| &shapes[v] == want)
        .filter(|v| graph.block_of(*v).is_none() || exits.contains(v))
        .collect()
}

/// Inserts a copy of `block` after value `at`; everything that read `at` reads the copy.
pub fn duplicate_block(
    graph: &ComputationGraph,
    block: usize,
    at: NodeId,
) -> Result<(ComputationGraph, MutationRecord), MutateError> {
    let (source, exit) = passthrough(graph, block).ok_or(MutateError::NoCandidate)?;
    let original = &graph.blocks[block];
    let mut g = graph.clone();
    let order = graph.topo_order().unwrap_or_default();
    let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::from([(source, at)]);
    let mut next = g.next_id().0;
    for n in order.iter().filter(|n| original.nodes.contains(n)) {
        map.insert(*n, NodeId(next));
        next += 1;
    }
    let fresh: BTreeSet<NodeId> = original.nodes.iter().map(|n| map[n]).collect();
    redirect(&mut g, at, map[&exit], &fresh);
    for n in &original.nodes {
        let node = &graph.nodes[n];
        g.nodes.insert(
            map[n],
            Node {
                op: node.op.clone(),
                inputs: node.inputs.iter().map(|s| map[s]).collect(),
            },
        );
    }
    let copies = graph
        .blocks
        .iter()
        .filter(|b| b.label.starts_with(&format!("{}~", original.label)))
        .count();
    let label = format!("{}~{}", original.label, copies + 1);
    g.blocks.push(Block {
        label: label.clone(),
        block_type: original.block_type.clone(),
        nodes: original.nodes.iter().map(|n| map[n]).collect(),
        frozen: original.frozen.iter().map(|n| map[n]).collect(),
    });
    Ok((
        g,
        MutationRecord::DuplicateBlock {
            block: original.label.clone(),
            copy: label,
            after: at,
        },
    ))
}

fn subgraph_mutation<R: Rng + ?Sized>(
    graph: &ComputationGraph,
    rng: &mut R,
    cfg: &MutationConfig,
) -> Result<(ComputationGraph, MutationRecord), MutateError> {
    let mut graph = graph.clone();
    graph.sort_blocks();
    let candidates: Vec<usize> = (0..graph.blocks.len())
        .filter(|&b| !graph.blocks[b].mutable_nodes().is_empty())
        .collect();
    let &b = candidates.choose(rng).ok_or(MutateError::NoCandidate)?;
    let selection = select_subgraph(&graph, b, rng, cfg.size)?;
    let chains = chain_targets(&graph, &selection)?;
    if chains.is_empty() {
        return Err(MutateError::NoChain);
    }
    let mut attempt = 0;
    let (replacement, targets) = loop {
        let targets: Vec<TargetSpec> = chains
            .iter()
            .map(|(_, props)| mutate_properties(props, rng, &cfg.property))
            .collect();
        match synthesize_replacement(&graph, &selection, &targets, &cfg.synth, rng) {
            Ok(r) => break (r, targets),
            Err(SynthError::Infeasible { chain }) if attempt < cfg.resamples => {
                debug!("infeasible target for chain {chain}, resampling");
                attempt += 1;
            }
            Err(e) => return Err(e.into()),
        }
    };
    let positions = positions_in_block(&graph.blocks[b], &selection.nodes);
    let mut child = replacement.graph;
    let mut shared = Vec::new();
    let block_type = graph.blocks[b].block_type.clone();
    for (other, blk) in graph.blocks.iter().enumerate() {
        if other == b || block_type.is_empty() || blk.block_type != block_type {
            continue;
        }
        if !rng.gen_bool(cfg.share_prob) {
            continue;
        }
        let Some(nodes) = nodes_at(blk, &positions) else {
            continue;
        };
        let Ok(sel) = SubgraphSelection::from_nodes(&child, nodes) else {
            continue;
        };
        let decomposition = decompose_sequential(&child, &sel);
        if decomposition.chains.len() != replacement.sequences.len() {
            continue;
        }
        if let Ok(g) = replace_subgraph(&child, &decomposition, &replacement.sequences) {
            if g.ensure_valid().is_ok() {
                child = g;
                shared.push(blk.label.clone());
            }
        }
    }
    Ok((
        child,
        MutationRecord::Subgraph {
            block: graph.blocks[b].label.clone(),
            nodes: selection.nodes.iter().copied().collect(),
            targets,
            sequences: replacement.sequences,
            shared,
        },
    ))
}

fn positions_in_block(block: &Block, nodes: &BTreeSet<NodeId>) -> Vec<usize> {
    block
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| nodes.contains(n))
        .map(|(i, _)| i)
        .collect()
}

fn nodes_at(block: &Block, positions: &[usize]) -> Option<Vec<NodeId>> {
    positions
        .iter()
        .map(|&i| {
            block
                .nodes
                .get(i)
                .copied()
                .filter(|n| !block.frozen.contains(n))
        })
        .collect()
}
