use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_ORACLE: &str = "[oracle]\nranks = [3]\nchains = 10\ncovering_samples = 20\n";

#[test]
fn infer_identity_and_vit() {
    let o = run(&["infer", fixture("identity.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("○  ×  ×  ×"), "{text}");
    assert!(text.contains("depth: 0"));
    let o = run(&["infer", fixture("vit_mlp.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("depth: 3"));
    let o = run(&[
        "--format",
        "csv",
        "infer",
        fixture("vit_mlp.json").to_str().unwrap(),
    ]);
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("0,0,3,"));
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(run(&["infer", &bad]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(&["infer", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let cfg = write(dir.path(), "c.toml", "unknown_key = 3\n");
    let id = fixture("identity.json");
    assert_eq!(
        run(&["--config", &cfg, "infer", id.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn synth_depth_target() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(
        dir.path(),
        "t.json",
        r#"{"input":[1,8,8,4],"target":{"mixing":["oxxx","xoxx","xxox","xxxo"],"depth":4}}"#,
    );
    let out = dir.path().join("a");
    let o = run(&[
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
        "synth",
        &target,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let totals: Vec<u32> = trace
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(totals.len() >= 5);
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
    assert_eq!(*totals.last().unwrap(), 0);
    let graph = fs::read_to_string(out.join("subgraph.json")).unwrap();
    assert!(graph.matches("\"kind\"").count() >= 4);

    let again = dir.path().join("b");
    let o = run(&[
        "--seed",
        "5",
        "--out",
        again.to_str().unwrap(),
        "--format",
        "csv",
        "synth",
        &target,
    ]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["trace.csv", "subgraph.json"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn synth_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let infeasible = write(
        dir.path(),
        "i.json",
        r#"{"input":[1,9,9,4],"target":{"shape":[1,4,4,4]}}"#,
    );
    assert_eq!(
        run(&["--seed", "1", "synth", &infeasible]).status.code(),
        Some(3)
    );
    let ok = write(
        dir.path(),
        "ok.json",
        r#"{"input":[1,8,8,4],"target":{"depth":1}}"#,
    );
    assert_eq!(
        run(&["synth", &ok]).status.code(),
        Some(2),
        "seed is mandatory"
    );
    // a budget too small for the enumerative search to finish
    let cfg = write(
        dir.path(),
        "c.toml",
        "[synthesis]\nalgorithm = \"enumerative\"\nmax_evaluations = 3\n",
    );
    let deep = write(
        dir.path(),
        "d.json",
        r#"{"input":[1,8,8,4],"target":{"depth":3}}"#,
    );
    assert_eq!(
        run(&["--seed", "1", "--config", &cfg, "synth", &deep])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn evolve_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let seed_graph = fixture("two_block_cnn.json");
    let zero = write(
        dir.path(),
        "zero.toml",
        "seed = 3\n[evolution]\ntrials = 0\n",
    );
    let out0 = dir.path().join("zero");
    let o = run(&[
        "--config",
        &zero,
        "--out",
        out0.to_str().unwrap(),
        "evolve",
        seed_graph.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let history = fs::read_to_string(out0.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let demo = write(
        dir.path(),
        "demo.toml",
        "seed = 11\n[evolution]\ntrials = 50\n",
    );
    let run_once = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "--config",
            &demo,
            "--out",
            out.to_str().unwrap(),
            "evolve",
            seed_graph.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(
            stdout(&o)
                .lines()
                .filter(|l| l.starts_with("trial"))
                .count()
                == 50
        );
        out
    };
    let (a, b) = (run_once("a"), run_once("b"));
    let front = fs::read_to_string(a.join("pareto_params.csv")).unwrap();
    assert!(front.lines().count() > 2, "{front}");
    let history = fs::read(a.join("history.jsonl")).unwrap();
    assert_eq!(history, fs::read(b.join("history.jsonl")).unwrap());
    // every line stands alone, so any prefix of the file is a valid history
    let text = String::from_utf8(history).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("metrics").is_some() && v.get("graph").is_some());
    }
}

#[test]
fn oracle_check_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", SMALL_ORACLE);
    let o = run(&["--config", &cfg, "oracle-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("all checks passed"));

    let o = run(&["--config", &cfg, "oracle-check", "--corrupt", "relu"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ReLU"));

    let empty = write(
        dir.path(),
        "e.toml",
        &format!("{SMALL_ORACLE}only_kinds = []\n"),
    );
    let o = run(&["--config", &empty, "oracle-check"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning: catalog is empty"));
}

#[test]
fn export_formats() {
    let g = fixture("two_block_cnn.json");
    let dot = stdout(&run(&["--format", "dot", "export", g.to_str().unwrap()]));
    assert!(dot.starts_with("digraph") && dot.contains("cluster_1"));
    let csv = stdout(&run(&["--format", "csv", "export", g.to_str().unwrap()]));
    assert_eq!(csv.lines().count(), 1 + 7);
    let json = stdout(&run(&["export", g.to_str().unwrap()]));
    assert_eq!(json, fs::read_to_string(&g).unwrap());
}
