use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compress::{compress_catalog, diversify, representatives};
use super::{stochastic_synthesize, Outcome, SynthesisLimits, SynthesisTask};
use crate::graph::{
    decompose_sequential, op_catalog, replace_subgraph, CatalogConfig, CatalogError,
    ComputationGraph, GraphError, PrimitiveOp, ShapeError, SubgraphSelection, TensorShape,
};
use crate::par::Execution;
use crate::properties::{satisfies, PropertyState, TargetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub catalog: CatalogConfig,
    /// Search over class representatives instead of the full catalog.
    pub compress: bool,
    pub extra_steps: usize,
    pub max_steps: usize,
    pub execution: Execution,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            catalog: CatalogConfig::default(),
            compress: true,
            extra_steps: 2,
            max_steps: 64,
            execution: Execution::Sequential,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("selection has {chains} chains but {targets} targets were given")]
    TargetCount { chains: usize, targets: usize },
    #[error("target for chain {chain} is infeasible")]
    Infeasible { chain: usize },
    #[error("synthesis for chain {chain} failed: {reason}")]
    ChainFailed { chain: usize, reason: String },
    #[error("chain {chain} does not satisfy its target after diversification")]
    Unsatisfied { chain: usize },
}

/// A rewritten graph and the op sequence substituted for each chain.
#[derive(Clone, Debug)]
pub struct Replacement {
    pub graph: ComputationGraph,
    pub sequences: Vec<Vec<PrimitiveOp>>,
}

/// Input shape and inferred properties of every sequential chain of `selection`, in
/// decomposition order.
pub fn chain_targets(
    graph: &ComputationGraph,
    selection: &SubgraphSelection,
) -> Result<Vec<(TensorShape, PropertyState)>, GraphError> {
    let shapes = graph.shapes()?;
    let decomposition = decompose_sequential(graph, selection);
    decomposition
        .chains
        .iter()
        .map(|chain| {
            let src = graph.node(chain[0])?.inputs[0];
            let input = shapes[&src].clone();
            let ops: Vec<&PrimitiveOp> = chain.iter().map(|n| &graph.nodes[n].op).collect();
            let state = PropertyState::identity(input.clone())
                .append_all(ops)
                .map_err(|source| GraphError::Shape {
                    node: chain[0],
                    source,
                })?;
            Ok((input, state))
        })
        .collect()
}

/// The catalog a chain starting at `input` is synthesized from.
fn task_catalog(
    config: &SynthConfig,
    input: &TensorShape,
    target: &TargetSpec,
) -> Result<(Vec<PrimitiveOp>, Vec<super::OpClass>), CatalogError> {
    let mut fixed = Vec::new();
    if let Some(s) = &target.shape {
        fixed.push(s.channels());
    }
    fixed.push(input.channels());
    let full = op_catalog(&config.catalog.with_fixed_features(&fixed))?;
    if config.compress {
        let classes = compress_catalog(&full, input);
        Ok((representatives(&classes), classes))
    } else {
        Ok((full, Vec::new()))
    }
}

/// Resynthesizes every sequential chain of `selection` against its mutated target,
/// keeping connectors and everything outside the selection.
pub fn synthesize_replacement<R: Rng + ?Sized>(
    graph: &ComputationGraph,
    selection: &SubgraphSelection,
    targets: &[TargetSpec],
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Replacement, SynthError> {
    let decomposition = decompose_sequential(graph, selection);
    if decomposition.chains.len() != targets.len() {
        return Err(SynthError::TargetCount {
            chains: decomposition.chains.len(),
            targets: targets.len(),
        });
    }
    let inputs = chain_targets(graph, selection)?;
    let mut sequences = Vec::with_capacity(targets.len());
    for (chain, ((input, _), target)) in inputs.iter().zip(targets).enumerate() {
        let (catalog, classes) = task_catalog(config, input, target)?;
        let task = SynthesisTask {
            initial: PropertyState::identity(input.clone()),
            target: target.clone(),
            catalog,
            limits: SynthesisLimits {
                max_steps: config.max_steps,
                original_size: decomposition.chains[chain].len(),
                extra_steps: config.extra_steps,
                ..SynthesisLimits::default()
            },
            execution: config.execution,
        };
        let ops = match stochastic_synthesize(&task, rng).outcome {
            Outcome::Satisfied(ops) => ops,
            Outcome::Infeasible => return Err(SynthError::Infeasible { chain }),
            Outcome::Failed(reason) => return Err(SynthError::ChainFailed { chain, reason }),
        };
        let ops = if classes.is_empty() {
            ops
        } else {
            diversify(&ops, &classes, rng)
        };
        let end = task.initial.append_all(&ops)?;
        if !satisfies(&end, target) {
            return Err(SynthError::Unsatisfied { chain });
        }
        sequences.push(ops);
    }
    let graph = replace_subgraph(graph, &decomposition, &sequences)?;
    Ok(Replacement { graph, sequences })
}
