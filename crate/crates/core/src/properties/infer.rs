use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mixing::MixingMatrix;
use super::semantics::{abstract_mixing, linearity, DepthState, Linearity, PropertyState};
use crate::graph::{ComputationGraph, GraphError, NodeId, PrimitiveOp, TensorShape};

/// Positions in the graph's input and output lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IoPair {
    pub input: usize,
    pub output: usize,
}

#[derive(Clone, Debug)]
struct Reach {
    mixing: MixingMatrix,
    /// best alternation count over paths ending here
    count: u32,
}

/// Properties for every (graph input, graph output) pair.
pub fn infer_graph_properties(
    graph: &ComputationGraph,
) -> Result<BTreeMap<IoPair, PropertyState>, GraphError> {
    graph.ensure_valid()?;
    let shapes = graph.shapes()?;
    let order = graph.topo_order().expect("validated graph is acyclic");
    let n_inputs = graph.inputs.len();

    // per value: reach info from each graph input, and the last op kind
    let mut reach: BTreeMap<NodeId, Vec<Option<Reach>>> = BTreeMap::new();
    let mut last_kind: BTreeMap<NodeId, Option<Linearity>> = BTreeMap::new();
    for (j, input) in graph.inputs.iter().enumerate() {
        let mut row = vec![None; n_inputs];
        row[j] = Some(Reach {
            mixing: MixingMatrix::identity(input.shape.rank()),
            count: 0,
        });
        reach.insert(input.id, row);
        last_kind.insert(input.id, None);
    }

    for id in order {
        let node = &graph.nodes[&id];
        let kind = linearity(node.op.kind());
        let rank = shapes[&id].rank();
        let local = abstract_mixing(&node.op, rank);
        let mut row: Vec<Option<Reach>> = vec![None; n_inputs];
        for &src in &node.inputs {
            let step = u32::from(last_kind[&src] != Some(kind));
            for (j, from) in reach[&src].iter().enumerate() {
                let Some(from) = from else { continue };
                let mixing = if let PrimitiveOp::Add = node.op {
                    from.mixing.clone()
                } else {
                    super::mixing::mix_compose(&local, &from.mixing)
                        .expect("simple ops preserve rank")
                };
                let count = from.count + step;
                row[j] = Some(match row[j].take() {
                    None => Reach { mixing, count },
                    Some(prev) => Reach {
                        mixing: prev.mixing.join(&mixing).expect("same shape operands"),
                        count: prev.count.max(count),
                    },
                });
            }
        }
        reach.insert(id, row);
        last_kind.insert(id, Some(kind));
    }

    let mut out = BTreeMap::new();
    for (o, &out_id) in graph.outputs.iter().enumerate() {
        let shape: &TensorShape = &shapes[&out_id];
        for (j, input) in graph.inputs.iter().enumerate() {
            let state = match &reach[&out_id][j] {
                Some(r) => PropertyState {
                    mixing: r.mixing.clone(),
                    depth: DepthState {
                        count: r.count,
                        last_kind: if r.count == 0 {
                            None
                        } else {
                            last_kind[&out_id]
                        },
                    },
                    shape: shape.clone(),
                },
                None => PropertyState {
                    mixing: MixingMatrix::none(shape.rank(), input.shape.rank()),
                    depth: DepthState::default(),
                    shape: shape.clone(),
                },
            };
            out.insert(
                IoPair {
                    input: j,
                    output: o,
                },
                state,
            );
        }
    }
    Ok(out)
}

/// Properties of a sequential chain applied to `shape`, built as a graph.
pub fn chain_graph(shape: TensorShape, ops: &[PrimitiveOp]) -> ComputationGraph {
    let mut g = ComputationGraph::new(vec![shape]);
    let out = g.add_chain(NodeId(0), ops);
    g.outputs = vec![out];
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Features;
    use crate::properties::{mix_compose, Loc};

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn identity_graph() {
        let g = ComputationGraph::identity(shape(&[1, 8, 8, 3]));
        let props = infer_graph_properties(&g).unwrap();
        let p = &props[&IoPair {
            input: 0,
            output: 0,
        }];
        assert!(p.is_identity());
        assert_eq!(p.shape, shape(&[1, 8, 8, 3]));
    }

    #[test]
    fn depth_is_max_over_paths() {
        // two inputs: I1 -> relu -> add ; I2 -> dense -> relu -> dense -> add
        let s = shape(&[1, 4]);
        let mut g = ComputationGraph::new(vec![s.clone(), s.clone()]);
        let a = g.add_node(PrimitiveOp::ReLU, vec![NodeId(0)]);
        let b = g.add_chain(
            NodeId(1),
            &[
                PrimitiveOp::Dense {
                    features: Features::SAME,
                },
                PrimitiveOp::ReLU,
                PrimitiveOp::Dense {
                    features: Features::SAME,
                },
            ],
        );
        let add = g.add_node(PrimitiveOp::Add, vec![a, b]);
        let c = g.add_node(PrimitiveOp::ReLU, vec![NodeId(1)]);
        let add2 = g.add_node(PrimitiveOp::Add, vec![add, c]);
        g.outputs = vec![add, add2];
        let props = infer_graph_properties(&g).unwrap();
        // add from input 1: dense(1) relu(2) dense(3) add(3)
        assert_eq!(
            props[&IoPair {
                input: 1,
                output: 0
            }]
                .depth
                .count,
            3
        );
        // add from input 0: relu(1) add(2)
        assert_eq!(
            props[&IoPair {
                input: 0,
                output: 0
            }]
                .depth
                .count,
            2
        );
        // add2 from input 1: max(long path 3, relu(1)->add2(2)) = 3
        assert_eq!(
            props[&IoPair {
                input: 1,
                output: 1
            }]
                .depth
                .count,
            3
        );
    }

    #[test]
    fn unconnected_pair_is_empty() {
        let s = shape(&[1, 4]);
        let mut g = ComputationGraph::new(vec![s.clone(), s]);
        let a = g.add_node(PrimitiveOp::ReLU, vec![NodeId(0)]);
        g.outputs = vec![a];
        let props = infer_graph_properties(&g).unwrap();
        let p = &props[&IoPair {
            input: 1,
            output: 0,
        }];
        assert_eq!(p.depth.count, 0);
        assert_eq!(p.mixing.count(Loc::X), 4);
    }

    #[test]
    fn residual_merges_with_identity() {
        let s = shape(&[1, 8, 8, 4]);
        let conv = PrimitiveOp::Convolution {
            features: Features::SAME,
            kernel: 3,
            stride: 1,
        };
        let mut g = ComputationGraph::new(vec![s.clone()]);
        let r = g.add_chain(NodeId(0), &[conv.clone(), PrimitiveOp::ReLU]);
        let a = g.add_node(PrimitiveOp::Add, vec![r, NodeId(0)]);
        g.outputs = vec![a];
        let props = infer_graph_properties(&g).unwrap();
        let chain = PropertyState::identity(s)
            .append_all(&[conv, PrimitiveOp::ReLU])
            .unwrap();
        let expected = chain.mixing.join(&MixingMatrix::identity(4)).unwrap();
        assert_eq!(
            props[&IoPair {
                input: 0,
                output: 0
            }]
                .mixing,
            expected
        );
    }

    #[test]
    fn chain_matches_append() {
        let s = shape(&[2, 8, 8, 4]);
        let ops = [
            PrimitiveOp::AveragePool { window: 2 },
            PrimitiveOp::GroupNorm { groups: 2 },
            PrimitiveOp::SiLU,
        ];
        let g = chain_graph(s.clone(), &ops);
        let inferred = infer_graph_properties(&g).unwrap();
        let appended = PropertyState::identity(s).append_all(&ops).unwrap();
        assert_eq!(
            inferred[&IoPair {
                input: 0,
                output: 0
            }],
            appended
        );
        let _ = mix_compose;
    }
}
