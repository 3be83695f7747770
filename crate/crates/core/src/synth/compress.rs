use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::distances::DistanceModel;
use crate::graph::{OpKind, PrimitiveOp, TensorShape};
use crate::properties::{abstract_mixing, linearity, TargetSpec};

/// Ops with identical abstract semantics; `representative` is the first member in
/// catalog order.
#[derive(Clone, Debug, PartialEq)]
pub struct OpClass {
    pub representative: PrimitiveOp,
    pub members: Vec<PrimitiveOp>,
    pub signature: u64,
}

/// Pools of either kind are interchangeable; every other kind stays apart so that
/// representatives keep the op types of their members.
fn family(kind: OpKind) -> OpKind {
    match kind {
        OpKind::MaxPool => OpKind::AveragePool,
        k => k,
    }
}

/// Partitions `catalog` by abstract semantics on every shape reachable from `working`.
pub fn compress_catalog(catalog: &[PrimitiveOp], working: &TensorShape) -> Vec<OpClass> {
    let shapes: Vec<TensorShape> = DistanceModel::new(catalog, working, &TargetSpec::default())
        .live_shapes()
        .iter()
        .cloned()
        .collect();
    let rank = working.rank();
    let mut classes: Vec<OpClass> = Vec::new();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for op in catalog {
        let outputs: Vec<Option<TensorShape>> = shapes
            .iter()
            .map(|s| op.is_simple().then(|| op.apply_shape(s).ok()).flatten())
            .collect();
        let applies = outputs.iter().any(Option::is_some);
        let mut h = DefaultHasher::new();
        family(op.kind()).hash(&mut h);
        linearity(op.kind()).hash(&mut h);
        abstract_mixing(op, rank).hash(&mut h);
        outputs.hash(&mut h);
        let signature = h.finish();
        match index.get(&signature) {
            Some(&c) if applies => classes[c].members.push(op.clone()),
            _ => {
                if applies {
                    index.insert(signature, classes.len());
                }
                classes.push(OpClass {
                    representative: op.clone(),
                    members: vec![op.clone()],
                    signature,
                });
            }
        }
    }
    classes
}

pub fn representatives(classes: &[OpClass]) -> Vec<PrimitiveOp> {
    classes.iter().map(|c| c.representative.clone()).collect()
}

/// Replaces every op by a uniformly drawn member of its class. Ops outside all classes
/// are kept.
pub fn diversify<R: Rng + ?Sized>(
    sequence: &[PrimitiveOp],
    classes: &[OpClass],
    rng: &mut R,
) -> Vec<PrimitiveOp> {
    sequence
        .iter()
        .map(|op| {
            classes
                .iter()
                .find(|c| c.representative == *op)
                .or_else(|| classes.iter().find(|c| c.members.contains(op)))
                .and_then(|c| c.members.choose(rng))
                .unwrap_or(op)
                .clone()
        })
        .collect()
}
