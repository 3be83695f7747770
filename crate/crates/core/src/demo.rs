//! Graphs shipped as fixtures, built in code so the files can be regenerated and checked.

use crate::graph::{
    op_catalog, Block, CatalogConfig, ComputationGraph, Features, NodeId, PrimitiveOp, TensorShape,
};
use crate::properties::{PropertyState, TargetSpec};
use crate::synth::{compress_catalog, representatives, SynthesisLimits, SynthesisTask};

fn conv(features: Features, kernel: usize) -> PrimitiveOp {
    PrimitiveOp::Convolution {
        features,
        kernel,
        stride: 1,
    }
}

/// Residual block: conv-norm-relu-conv-norm, skip add, relu. The add is frozen.
fn residual_block(g: &mut ComputationGraph, from: NodeId, label: &str) -> NodeId {
    let body = g.add_chain(
        from,
        &[
            conv(Features::SAME, 3),
            PrimitiveOp::BatchNorm,
            PrimitiveOp::ReLU,
            conv(Features::SAME, 3),
            PrimitiveOp::BatchNorm,
        ],
    );
    let add = g.add_node(PrimitiveOp::Add, vec![body, from]);
    let out = g.add_node(PrimitiveOp::ReLU, vec![add]);
    let nodes = ((from.0 + 1)..=out.0).map(NodeId).collect();
    g.blocks.push(Block {
        label: label.into(),
        block_type: String::new(),
        nodes,
        frozen: vec![add],
    });
    out
}

/// Plain block: channel-doubling conv, ReLU, spatial halving by average pooling.
fn plain_block(g: &mut ComputationGraph, from: NodeId, label: &str) -> NodeId {
    let out = g.add_chain(
        from,
        &[
            conv(Features::scale(2, 1), 3),
            PrimitiveOp::ReLU,
            PrimitiveOp::AveragePool { window: 2 },
        ],
    );
    g.blocks.push(Block {
        label: label.into(),
        block_type: String::new(),
        nodes: ((from.0 + 1)..=out.0).map(NodeId).collect(),
        frozen: Vec::new(),
    });
    out
}

fn dense_head(g: &mut ComputationGraph, from: NodeId) -> NodeId {
    g.add_node(
        PrimitiveOp::Dense {
            features: Features::Fixed(10),
        },
        vec![from],
    )
}

/// Two plain conv blocks on a 16x16x4 input, then a dense head. The evolution demo seed.
pub fn two_block_cnn() -> ComputationGraph {
    let shape = TensorShape::new(vec![1, 16, 16, 4]).expect("valid shape");
    let mut g = ComputationGraph::new(vec![shape]);
    let b1 = plain_block(&mut g, NodeId(0), "block1");
    let b2 = plain_block(&mut g, b1, "block2");
    let head = dense_head(&mut g, b2);
    g.outputs = vec![head];
    g.retag_blocks().expect("fixture shape-checks");
    g
}

/// Stem conv, two residual blocks of the same type, pooled dense head.
pub fn residual_cnn() -> ComputationGraph {
    let shape = TensorShape::new(vec![1, 16, 16, 3]).expect("valid shape");
    let mut g = ComputationGraph::new(vec![shape]);
    let stem = g.add_chain(NodeId(0), &[conv(Features::Fixed(16), 3)]);
    let b1 = residual_block(&mut g, stem, "block1");
    let b2 = residual_block(&mut g, b1, "block2");
    let pooled = g.add_node(PrimitiveOp::AveragePool { window: 2 }, vec![b2]);
    let head = dense_head(&mut g, pooled);
    g.outputs = vec![head];
    g.retag_blocks().expect("fixture shape-checks");
    g
}

/// Transformer MLP: norm, 4x expansion, GeLU, projection back, residual add.
pub fn vit_mlp() -> ComputationGraph {
    let shape = TensorShape::new(vec![1, 16, 32]).expect("valid shape");
    let mut g = ComputationGraph::new(vec![shape]);
    let body = g.add_chain(
        NodeId(0),
        &[
            PrimitiveOp::LayerNorm,
            PrimitiveOp::Dense {
                features: Features::scale(4, 1),
            },
            PrimitiveOp::GeLU,
            PrimitiveOp::Dense {
                features: Features::scale(1, 4),
            },
        ],
    );
    let add = g.add_node(PrimitiveOp::Add, vec![body, NodeId(0)]);
    g.outputs = vec![add];
    g.blocks.push(Block {
        label: "mlp".into(),
        block_type: String::new(),
        nodes: (1..=add.0).map(NodeId).collect(),
        frozen: vec![add],
    });
    g.retag_blocks().expect("fixture shape-checks");
    g
}

pub fn identity() -> ComputationGraph {
    ComputationGraph::identity(TensorShape::new(vec![1, 8, 8, 4]).expect("valid shape"))
}

/// Replacement task for block `index`: the simple body ops' own properties as the target,
/// the compressed catalog, and the body length as the stochastic phase. `None` when the
/// block has no simple body or the graph does not type-check.
pub fn block_task(graph: &ComputationGraph, index: usize) -> Option<SynthesisTask> {
    let shapes = graph.shapes().ok()?;
    let body: Vec<NodeId> = graph
        .blocks
        .get(index)?
        .mutable_nodes()
        .into_iter()
        .filter(|n| graph.nodes[n].op.is_simple())
        .collect();
    let ops: Vec<PrimitiveOp> = body.iter().map(|n| graph.nodes[n].op.clone()).collect();
    let input = shapes
        .get(graph.nodes[body.first()?].inputs.first()?)?
        .clone();
    let props = PropertyState::identity(input.clone())
        .append_all(&ops)
        .ok()?;
    let config =
        CatalogConfig::default().with_fixed_features(&[props.shape.channels(), input.channels()]);
    let reps = representatives(&compress_catalog(&op_catalog(&config).ok()?, &input));
    let limits = SynthesisLimits {
        original_size: ops.len(),
        ..SynthesisLimits::default()
    };
    Some(SynthesisTask::new(input, TargetSpec::from_state(&props), reps).with_limits(limits))
}

/// (file name, graph) for every shipped fixture.
pub fn fixtures() -> Vec<(&'static str, ComputationGraph)> {
    vec![
        ("two_block_cnn.json", two_block_cnn()),
        ("residual_cnn.json", residual_cnn()),
        ("vit_mlp.json", vit_mlp()),
        ("identity.json", identity()),
    ]
}
