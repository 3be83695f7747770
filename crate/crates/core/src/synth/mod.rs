//! Progressive (greedy and stochastic) and enumerative synthesis of op chains, catalog
//! compression and whole-subgraph replacement.

mod compress;
mod enumerative;
mod progressive;
mod replace;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distances::{Breakdown, Distance, DistanceModel};
use crate::graph::{PrimitiveOp, TensorShape};
use crate::par::Execution;
use crate::properties::{PropertyState, TargetSpec};

pub use compress::{compress_catalog, diversify, representatives, OpClass};
pub use enumerative::enumerative_synthesize;
pub use progressive::{greedy_synthesize, stochastic_synthesize};
pub use replace::{chain_targets, synthesize_replacement, SynthConfig, SynthError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisLimits {
    /// Hard cap on the length of any returned chain.
    pub max_steps: usize,
    /// Length of the subgraph being replaced; the stochastic phase lasts this long.
    pub original_size: usize,
    /// Greedy steps allowed after the stochastic phase.
    pub extra_steps: usize,
    /// Budget of candidate evaluations for the enumerative search.
    pub max_evaluations: u64,
}

impl Default for SynthesisLimits {
    fn default() -> Self {
        Self {
            max_steps: 64,
            original_size: 0,
            extra_steps: 2,
            max_evaluations: 20_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisTask {
    pub initial: PropertyState,
    pub target: TargetSpec,
    pub catalog: Vec<PrimitiveOp>,
    pub limits: SynthesisLimits,
    pub execution: Execution,
}

impl SynthesisTask {
    /// Task starting from the identity program on `shape`, with `original_size` set to a
    /// lower bound on the chain length the target implies.
    pub fn new(shape: TensorShape, target: TargetSpec, catalog: Vec<PrimitiveOp>) -> Self {
        let initial = PropertyState::identity(shape);
        let model = DistanceModel::new(&catalog, &initial.shape, &target);
        let b = model.breakdown(&initial);
        let bound = [
            b.depth.finite().unwrap_or(0) as usize,
            usize::from(!b.mixing.is_zero()),
            usize::from(!b.shape.is_zero()),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        Self {
            initial,
            target,
            catalog,
            limits: SynthesisLimits {
                original_size: bound,
                ..SynthesisLimits::default()
            },
            execution: Execution::default(),
        }
    }

    pub fn with_limits(mut self, limits: SynthesisLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub(crate) fn model(&self) -> DistanceModel {
        DistanceModel::new(&self.catalog, &self.initial.shape, &self.target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum Outcome {
    Satisfied(Vec<PrimitiveOp>),
    Infeasible,
    Failed(String),
}

/// Distances after one appended op (or of the initial state when `op` is absent).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub op: Option<PrimitiveOp>,
    pub distances: Breakdown,
    pub total: Distance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisResult {
    pub outcome: Outcome,
    /// Ops appended (for the enumerative search: length of the result).
    pub steps: usize,
    /// Candidate distance (or satisfaction) evaluations.
    pub distance_evaluations: u64,
    pub trace: Vec<TraceStep>,
}

impl SynthesisResult {
    pub fn ops(&self) -> Option<&[PrimitiveOp]> {
        match &self.outcome {
            Outcome::Satisfied(ops) => Some(ops),
            _ => None,
        }
    }

    pub fn is_satisfied(&self) -> bool {
        matches!(self.outcome, Outcome::Satisfied(_))
    }

    pub fn distance_trace(&self) -> Vec<Distance> {
        self.trace.iter().map(|t| t.total).collect()
    }
}

impl fmt::Display for SynthesisResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.trace.iter().enumerate() {
            let op =
                t.op.as_ref()
                    .map_or_else(|| "(start)".to_string(), |o| o.to_string());
            writeln!(
                f,
                "step {i:>3}  {op:<32} mixing={} depth={} shape={}  d={}",
                t.distances.mixing, t.distances.depth, t.distances.shape, t.total
            )?;
        }
        match &self.outcome {
            Outcome::Satisfied(ops) => writeln!(f, "satisfied with {} ops", ops.len()),
            Outcome::Infeasible => writeln!(f, "infeasible"),
            Outcome::Failed(why) => writeln!(f, "failed: {why}"),
        }?;
        writeln!(f, "distance evaluations: {}", self.distance_evaluations)
    }
}

fn trace_step(model: &DistanceModel, op: Option<&PrimitiveOp>, state: &PropertyState) -> TraceStep {
    let distances = model.breakdown(state);
    TraceStep {
        op: op.cloned(),
        distances,
        total: distances.total(),
    }
}
