use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ComputationGraph, GraphError, PrimitiveOp};
use crate::properties::{infer_graph_properties, IoPair, Loc};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub flops: u64,
    pub params: u64,
}

/// Closed-form multiply-add and parameter counts summed over all nodes. Dense and
/// convolution layers carry a bias; norms carry a scale and a shift per channel.
pub fn static_cost_model(graph: &ComputationGraph) -> Result<Cost, GraphError> {
    let shapes = graph.shapes()?;
    let mut cost = Cost::default();
    for (id, node) in &graph.nodes {
        let out = &shapes[id];
        let input = &shapes[&node.inputs[0]];
        let out_elems = out.num_elements() as u64;
        let c_in = input.channels() as u64;
        let c_out = out.channels() as u64;
        let positions = out_elems / c_out.max(1);
        let (flops, params) = match &node.op {
            PrimitiveOp::Dense { .. } => (2 * c_in * c_out * positions, c_in * c_out + c_out),
            op if op.conv_spec().is_some() => {
                let c = op.conv_spec().expect("conv");
                let taps = (c.kernel as u64).pow(input.spatial().len() as u32);
                let fan_in = taps * c_in / c.groups as u64;
                (2 * fan_in * c_out * positions, fan_in * c_out + c_out)
            }
            PrimitiveOp::BatchNorm | PrimitiveOp::LayerNorm | PrimitiveOp::GroupNorm { .. } => {
                (2 * out_elems, 2 * c_out)
            }
            op if op.pool_window().is_some() => {
                let w = op.pool_window().expect("pool") as u64;
                (out_elems * w.pow(out.spatial().len() as u32), 0)
            }
            _ => (out_elems, 0),
        };
        cost.flops += flops;
        cost.params += params;
    }
    Ok(cost)
}

/// Objective values of one evaluated graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy_proxy: f64,
    pub flops: u64,
    pub params: u64,
    pub throughput_proxy: f64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("evaluator failed: {0}")]
    Other(String),
}

/// Scores a graph. `seed` distinguishes repeated evaluations of the same graph.
pub trait Evaluator: Sync {
    fn evaluate(&self, graph: &ComputationGraph, seed: u64) -> Result<Metrics, EvalError>;
}

/// Accuracy floor of the surrogate: the score of a graph that does nothing.
pub const SURROGATE_FLOOR: f64 = 0.1;
const SURROGATE_CEILING: f64 = 0.95;

/// Stand-in for a trained accuracy: a saturating function of the first input/output
/// pair's depth, the number of all-to-one mixing entries and the log parameter count.
/// The seed jitters the three term weights by up to 5%, so every term stays monotone.
pub fn surrogate_accuracy(graph: &ComputationGraph, seed: u64) -> Result<f64, GraphError> {
    let props = infer_graph_properties(graph)?;
    let Some(p) = props.get(&IoPair {
        input: 0,
        output: 0,
    }) else {
        return Ok(SURROGATE_FLOOR);
    };
    let params = static_cost_model(graph)?.params as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = || 1.0 + 0.05 * rng.gen_range(-1.0..=1.0);
    let depth = f64::from(p.depth.count.min(16));
    let all_to_one = p.mixing.count(Loc::A) as f64;
    let x = 0.12 * jitter() * depth
        + 0.04 * jitter() * all_to_one
        + 0.05 * jitter() * (1.0 + params).ln();
    Ok(SURROGATE_FLOOR + (SURROGATE_CEILING - SURROGATE_FLOOR) * (1.0 - (-x).exp()))
}

/// Static cost model plus the surrogate accuracy.
#[derive(Clone, Copy, Debug, Default)]
pub struct StaticEvaluator;

impl Evaluator for StaticEvaluator {
    fn evaluate(&self, graph: &ComputationGraph, seed: u64) -> Result<Metrics, EvalError> {
        let cost = static_cost_model(graph)?;
        Ok(Metrics {
            accuracy_proxy: surrogate_accuracy(graph, seed)?,
            flops: cost.flops,
            params: cost.params,
            throughput_proxy: 1e9 / (1.0 + cost.flops as f64),
        })
    }
}

/// Stable 64-bit fingerprint of a graph's structure.
pub fn graph_fingerprint(graph: &ComputationGraph) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    graph.canonical_form().hash(&mut h);
    h.finish()
}
