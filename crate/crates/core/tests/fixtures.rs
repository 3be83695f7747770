use std::path::PathBuf;

use propsynth::demo;
use propsynth::graph::serial;
use propsynth::properties::{infer_graph_properties, IoPair};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn fixture_files_match_builders() {
    let regen = std::env::var_os("PROPSYNTH_REGEN_FIXTURES").is_some();
    for (name, graph) in demo::fixtures() {
        let path = dir().join(name);
        let text = serial::to_json(&graph);
        if regen {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            on_disk, text,
            "{name} is stale; rerun with PROPSYNTH_REGEN_FIXTURES=1"
        );
        let parsed = serial::from_json(&on_disk).unwrap();
        assert!(parsed.isomorphic(&graph));
        parsed.ensure_valid().unwrap();
    }
}

#[test]
fn vit_mlp_has_depth_three() {
    let props = infer_graph_properties(&demo::vit_mlp()).unwrap();
    assert_eq!(
        props[&IoPair {
            input: 0,
            output: 0
        }]
            .depth
            .count,
        3
    );
}

#[test]
fn residual_blocks_share_a_type() {
    let g = demo::residual_cnn();
    assert_eq!(g.blocks.len(), 2);
    assert_eq!(g.blocks[0].block_type, g.blocks[1].block_type);
    assert!(!g.blocks[0].block_type.is_empty());
}

#[test]
fn plain_cnn_blocks_differ_by_boundary_shape() {
    let g = demo::two_block_cnn();
    assert_eq!(g.nodes.len(), 7);
    assert_ne!(g.blocks[0].block_type, g.blocks[1].block_type);
    let shapes = g.shapes().unwrap();
    assert_eq!(shapes[&g.outputs[0]].dims(), &[1, 4, 4, 10]);
}
