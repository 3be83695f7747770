//! Random shapes, chains and synthesis tasks for tests, benches and the CLI.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::evolve::{mutate_properties, PropertyMutation};
use crate::graph::{PrimitiveOp, TensorShape};
use crate::properties::{PropertyState, TargetSpec};

/// Rank-4 shape with a square spatial extent that several windows divide.
pub fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> TensorShape {
    let batch = *[1, 2].choose(rng).expect("nonempty");
    let side = *[4, 6, 8, 12, 16].choose(rng).expect("nonempty");
    let channels = *[2, 4, 8, 16].choose(rng).expect("nonempty");
    TensorShape::new(vec![batch, side, side, channels]).expect("positive dims")
}

/// Up to `len` ops drawn uniformly among the simple catalog ops that apply at each
/// point; stops early when none applies or channels would exceed `max_channels`.
pub fn random_chain<R: Rng + ?Sized>(
    rng: &mut R,
    catalog: &[PrimitiveOp],
    start: &TensorShape,
    len: usize,
    max_channels: usize,
) -> Vec<PrimitiveOp> {
    let mut shape = start.clone();
    let mut ops = Vec::with_capacity(len);
    for _ in 0..len {
        let options: Vec<(&PrimitiveOp, TensorShape)> = catalog
            .iter()
            .filter(|op| op.is_simple())
            .filter_map(|op| op.apply_shape(&shape).ok().map(|s| (op, s)))
            .filter(|(_, s)| s.channels() <= max_channels)
            .collect();
        let Some((op, next)) = options.choose(rng) else {
            break;
        };
        ops.push((*op).clone());
        shape = next.clone();
    }
    ops
}

/// A synthesis task whose target is the property state of a known chain, possibly
/// relaxed by a property mutation.
#[derive(Clone, Debug)]
pub struct SampledTask {
    pub shape: TensorShape,
    pub chain: Vec<PrimitiveOp>,
    pub props: PropertyState,
    pub target: TargetSpec,
}

pub fn random_task<R: Rng + ?Sized>(
    rng: &mut R,
    catalog: &[PrimitiveOp],
    max_len: usize,
    mutation: Option<&PropertyMutation>,
) -> SampledTask {
    let shape = random_shape(rng);
    let len = rng.gen_range(0..=max_len);
    let chain = random_chain(rng, catalog, &shape, len, 64);
    let props = PropertyState::identity(shape.clone())
        .append_all(&chain)
        .expect("sampled chain applies");
    let target = match mutation {
        Some(m) => mutate_properties(&props, rng, m),
        None => TargetSpec::from_state(&props),
    };
    SampledTask {
        shape,
        chain,
        props,
        target,
    }
}
