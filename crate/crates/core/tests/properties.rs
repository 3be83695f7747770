use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use propsynth::graph::{op_catalog, CatalogConfig, Features, PrimitiveOp, TensorShape};
use propsynth::properties::{
    chain_graph, infer_graph_properties, mix_compose, satisfies, IoPair, Loc, MixingMatrix,
    PropertyState, TargetSpec,
};
use propsynth::sample::{random_chain, random_shape};

fn loc() -> impl Strategy<Value = Loc> {
    prop::sample::select(Loc::ALL.to_vec())
}

fn matrix(n: usize) -> impl Strategy<Value = MixingMatrix> {
    prop::collection::vec(prop::collection::vec(loc(), n), n)
        .prop_map(|r| MixingMatrix::from_rows(r).unwrap())
}

proptest! {
    #[test]
    fn composition_is_associative(a in matrix(3), b in matrix(3), c in matrix(3)) {
        let left = mix_compose(&mix_compose(&a, &b).unwrap(), &c).unwrap();
        let right = mix_compose(&a, &mix_compose(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn identity_is_neutral(a in matrix(4)) {
        let i = MixingMatrix::identity(4);
        prop_assert_eq!(&mix_compose(&i, &a).unwrap(), &a);
        prop_assert_eq!(&mix_compose(&a, &i).unwrap(), &a);
    }

    #[test]
    fn graph_inference_matches_chain_semantics(seed in any::<u64>()) {
        let catalog = op_catalog(&CatalogConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = random_shape(&mut rng);
        let ops = random_chain(&mut rng, &catalog, &shape, 5, 64);
        let direct = PropertyState::identity(shape.clone()).append_all(&ops).unwrap();
        let inferred = infer_graph_properties(&chain_graph(shape, &ops)).unwrap();
        prop_assert_eq!(&inferred[&IoPair { input: 0, output: 0 }], &direct);
        prop_assert!(satisfies(&direct, &TargetSpec::from_state(&direct)));
    }
}

#[test]
fn depth_counts_alternations() {
    let s = TensorShape::new(vec![1, 8, 8, 4]).unwrap();
    let dense = PrimitiveOp::Dense {
        features: Features::SAME,
    };
    let depth = |ops: &[PrimitiveOp]| {
        PropertyState::identity(s.clone())
            .append_all(ops)
            .unwrap()
            .depth
            .count
    };
    assert_eq!(depth(&[]), 0);
    assert_eq!(depth(&[dense.clone(), dense.clone()]), 1);
    assert_eq!(depth(&[dense.clone(), PrimitiveOp::ReLU, dense.clone()]), 3);
    assert_eq!(depth(&[PrimitiveOp::ReLU, PrimitiveOp::Sigmoid]), 1);
}

#[test]
fn satisfaction_is_monotone_in_the_target() {
    let s = TensorShape::new(vec![1, 8, 8, 4]).unwrap();
    let state = PropertyState::identity(s.clone())
        .append_all(&[
            PrimitiveOp::Dense {
                features: Features::SAME,
            },
            PrimitiveOp::ReLU,
        ])
        .unwrap();
    let full = TargetSpec::from_state(&state);
    assert!(satisfies(
        &state,
        &TargetSpec {
            shape: None,
            ..full.clone()
        }
    ));
    assert!(satisfies(
        &state,
        &TargetSpec {
            depth: Some(1),
            ..full.clone()
        }
    ));
    assert!(!satisfies(
        &state,
        &TargetSpec {
            depth: Some(3),
            ..full.clone()
        }
    ));
    assert!(!satisfies(
        &state,
        &TargetSpec {
            mixing: Some(MixingMatrix::filled(4, 4, Loc::A)),
            ..full
        }
    ));
}
