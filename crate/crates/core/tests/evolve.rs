use propsynth::demo;
use propsynth::distances::DistanceModel;
use propsynth::evolve::*;
use propsynth::graph::{
    op_catalog, select_subgraph, ComputationGraph, SizeDistribution, SubgraphSelection,
};
use propsynth::properties::{satisfies, PropertyState, TargetSpec};
use propsynth::synth::chain_targets;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn metrics(acc: f64, params: u64) -> Metrics {
    Metrics {
        accuracy_proxy: acc,
        flops: 2 * params,
        params,
        throughput_proxy: 1.0 / (1.0 + params as f64),
    }
}

fn weights(pop: &[Metrics]) -> Vec<f64> {
    let ctx = ParetoContext::new(Objective::Accuracy, Objective::Params, pop);
    pop.iter().map(|m| ctx.weight(m)).collect()
}

#[test]
fn depth_is_kept_half_the_time() {
    let props = PropertyState::identity(demo::identity().inputs[0].shape.clone())
        .append_all(&[propsynth::graph::PrimitiveOp::ReLU])
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let kept = (0..n)
        .filter(|_| {
            let t = mutate_properties(&props, &mut rng, &PropertyMutation::default());
            t.depth == Some(props.depth.count)
        })
        .count();
    let freq = kept as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}

#[test]
fn horizontal_front_gap_is_the_primary_gap() {
    let pop = [metrics(0.9, 10), metrics(0.9, 20), metrics(0.6, 15)];
    let w = weights(&pop);
    assert_eq!(&w[..2], &[0.0, 0.0]);
    assert!((w[2] - 0.3).abs() < 1e-12);
}

#[test]
fn sloped_front_is_normalized_by_endpoint_slope() {
    // endpoint slope 0.4 / 20 puts the front on a 45 degree line after scaling
    let pop = [metrics(0.5, 10), metrics(0.9, 30), metrics(0.45, 20)];
    let w = weights(&pop);
    assert!((w[2] - 0.25 / 2f64.sqrt()).abs() < 1e-12, "{}", w[2]);
}

#[test]
fn uniform_scaling_keeps_weight_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    use rand::Rng;
    for _ in 0..50 {
        let pop: Vec<Metrics> = (0..12)
            .map(|_| metrics(rng.gen_range(0.1..0.9), rng.gen_range(100..10_000)))
            .collect();
        let scaled: Vec<Metrics> = pop
            .iter()
            .map(|m| Metrics {
                accuracy_proxy: m.accuracy_proxy * 7.0,
                params: m.params * 7,
                ..*m
            })
            .collect();
        assert_eq!(
            top_k(&weights(&pop), 100.0),
            top_k(&weights(&scaled), 100.0)
        );
    }
}

#[test]
fn selection_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let one = [metrics(0.5, 10)];
    for _ in 0..10 {
        assert_eq!(
            select(
                &one,
                Objective::Accuracy,
                &[Objective::Params],
                25.0,
                &mut rng
            ),
            Some(0)
        );
    }
    assert_eq!(
        select(
            &[],
            Objective::Accuracy,
            &[Objective::Params],
            25.0,
            &mut rng
        ),
        None
    );
    let pop: Vec<Metrics> = (0..8).map(|i| metrics(0.1 * i as f64, 100 - i)).collect();
    let mut counts = [0usize; 8];
    for _ in 0..8000 {
        counts[select(
            &pop,
            Objective::Accuracy,
            &[Objective::Params],
            100.0,
            &mut rng,
        )
        .unwrap()] += 1;
    }
    assert!(
        counts.iter().all(|&c| (800..1200).contains(&c)),
        "{counts:?}"
    );
}

#[test]
fn dominant_individual_is_drawn_most() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    use rand::Rng;
    let mut pop: Vec<Metrics> = (0..20)
        .map(|_| metrics(rng.gen_range(0.1..0.6), rng.gen_range(1000..5000)))
        .collect();
    pop[7] = metrics(0.95, 10);
    let mut counts = [0usize; 20];
    let secondaries = [Objective::Params, Objective::Flops];
    for _ in 0..10_000 {
        counts[select(&pop, Objective::Accuracy, &secondaries, 10.0, &mut rng).unwrap()] += 1;
    }
    assert!(counts.iter().all(|&c| c <= counts[7]), "{counts:?}");
}

#[test]
fn duplication_adds_one_block_worth_of_nodes() {
    let g = demo::residual_cnn();
    for b in 0..g.blocks.len() {
        for at in duplicate_sites(&g, b) {
            let (child, _) = duplicate_block(&g, b, at).unwrap();
            child.ensure_valid().unwrap();
            assert_eq!(child.nodes.len(), g.nodes.len() + g.blocks[b].nodes.len());
            assert_eq!(child.blocks.len(), 3);
        }
    }
}

#[test]
fn delete_then_duplicate_is_deterministic() {
    let g = demo::residual_cnn();
    let run = || {
        let (a, _) = delete_block(&g, 0).unwrap();
        let site = duplicate_sites(&a, 0)[1];
        let (b, _) = duplicate_block(&a, 0, site).unwrap();
        b
    };
    let (x, y) = (run(), run());
    assert_eq!(x, y);
    x.ensure_valid().unwrap();
    assert_eq!(x.nodes.len(), g.nodes.len());
    let single = ComputationGraph {
        blocks: vec![g.blocks[0].clone()],
        ..g.clone()
    };
    assert!(delete_block(&single, 0).is_err());
}

#[test]
fn unmutated_targets_keep_selection_properties() {
    let g = demo::two_block_cnn();
    let cfg = MutationConfig {
        weights: MutationWeights {
            subgraph: 1.0,
            delete: 0.0,
            duplicate: 0.0,
        },
        property: PropertyMutation {
            depth_keep: 1.0,
            shape_drop: 0.0,
            pairing_drop: 0.0,
            ..PropertyMutation::default()
        },
        ..MutationConfig::default()
    };
    let mut ok = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Ok((child, record)) = mutate_individual(&g, &mut rng, &cfg) else {
            continue;
        };
        child.ensure_valid().unwrap();
        let MutationRecord::Subgraph {
            nodes,
            targets,
            sequences,
            ..
        } = record
        else {
            panic!("only subgraph mutations are enabled");
        };
        let sel = SubgraphSelection::from_nodes(&g, nodes).unwrap();
        let chains = chain_targets(&g, &sel).unwrap();
        assert_eq!(chains.len(), sequences.len());
        for (((input, props), target), seq) in chains.iter().zip(&targets).zip(&sequences) {
            assert_eq!(*target, TargetSpec::from_state(props));
            let got = PropertyState::identity(input.clone())
                .append_all(seq)
                .unwrap();
            assert!(satisfies(&got, &TargetSpec::from_state(props)), "{seq:?}");
        }
        ok += 1;
    }
    assert!(ok >= 50, "{ok}/100 mutations succeeded");
}

#[test]
fn retained_shape_without_deeper_target_is_feasible() {
    let g = demo::two_block_cnn();
    let synth = propsynth::synth::SynthConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..200 {
        let block = rand::Rng::gen_range(&mut rng, 0..g.blocks.len());
        let sel = select_subgraph(&g, block, &mut rng, SizeDistribution::default()).unwrap();
        for (input, props) in chain_targets(&g, &sel).unwrap() {
            let t = mutate_properties(&props, &mut rng, &PropertyMutation::default());
            if t.shape.is_none() || t.depth > Some(props.depth.count) {
                continue;
            }
            let catalog = op_catalog(
                &synth
                    .catalog
                    .with_fixed_features(&[props.shape.channels(), input.channels()]),
            )
            .unwrap();
            let model = DistanceModel::new(&catalog, &input, &t);
            assert!(model
                .total(&PropertyState::identity(input.clone()))
                .is_finite());
            assert!(satisfies(&props, &t));
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn zero_trials_keeps_two_seed_records() {
    let cfg = EvolveConfig {
        trials: 0,
        ..EvolveConfig::default()
    };
    let h = evolve(
        &demo::two_block_cnn(),
        &StaticEvaluator,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(h.individuals.len(), 2);
    assert_eq!(h.to_jsonl().lines().count(), 2);
    assert_ne!(h.individuals[0].eval_seed, h.individuals[1].eval_seed);
}

#[test]
fn short_run_is_reproducible_and_covers_seed() {
    let cfg = EvolveConfig {
        trials: 40,
        ..EvolveConfig::default()
    };
    let run = |s| {
        let mut lines = Vec::new();
        let h = evolve_with_sink(
            &demo::two_block_cnn(),
            &StaticEvaluator,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(s),
            &mut |e| {
                if let TrialEvent::Inserted { line, .. } = e {
                    lines.push(line.to_string());
                }
            },
        )
        .unwrap();
        assert_eq!(lines.join("\n") + "\n", h.to_jsonl());
        h
    };
    let (a, b) = (run(4), run(4));
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert!(a.front_covers_seed(Objective::Accuracy, Objective::Params));
    for ind in &a.individuals {
        ind.graph.ensure_valid().unwrap();
        if let Some(p) = ind.parent {
            assert!(p < ind.id);
        }
    }
    assert_eq!(a.individuals.len() + a.failures.len(), 42);
}
