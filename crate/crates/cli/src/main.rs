mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use config::{Algorithm, RunConfig};
use propsynth::audit::oracle_check;
use propsynth::evolve::{evolve_with_sink, StaticEvaluator, TrialEvent};
use propsynth::graph::{op_catalog, serial, ComputationGraph, OpKind, TensorShape};
use propsynth::properties::{chain_graph, infer_graph_properties, TargetSpec};
use propsynth::synth::{
    compress_catalog, enumerative_synthesize, greedy_synthesize, representatives,
    stochastic_synthesize, Outcome, SynthesisLimits, SynthesisResult, SynthesisTask,
};

#[derive(Parser, Debug)]
#[command(
    name = "propsynth",
    version,
    about = "Property-guided synthesis and evolution of tensor graphs"
)]
struct Cli {
    /// RNG seed; required by `synth` and `evolve` unless the config sets one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Dot,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the mixing, depth and shape of every input/output pair of a graph.
    Infer { graph: PathBuf },
    /// Synthesize an op chain for a target file.
    Synth { target: PathBuf },
    /// Evolve a seed graph; writes history.jsonl and one Pareto CSV per secondary objective.
    Evolve { graph: PathBuf },
    /// Compare abstract semantics with the reference interpreter and check distance laws.
    OracleCheck {
        /// Test mode: treat this op kind's abstract mixing as all-to-all.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Convert a graph file to JSON, DOT or a CSV node table.
    Export { graph: PathBuf },
}

/// Error classes with their exit codes.
enum Failure {
    Input(anyhow::Error),
    Infeasible(String),
    SynthesisFailed(String),
    Violation(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::SynthesisFailed(_) => 4,
            Failure::Violation(_) => 5,
        }
    }
}

type Res = Result<(), Failure>;

/// Synthesis input: the chain's input shape and the properties to reach.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthTarget {
    input: TensorShape,
    target: TargetSpec,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROPSYNTH_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e:#}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
                Failure::SynthesisFailed(m) => eprintln!("synthesis failed: {m}"),
                Failure::Violation(m) => eprintln!("oracle violation: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Res {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Infer { graph } => infer(cli, graph),
        Command::Synth { target } => synth(cli, &cfg, target),
        Command::Evolve { graph } => evolve(cli, &cfg, graph),
        Command::OracleCheck { corrupt } => oracle(cli, &cfg, corrupt.as_deref()),
        Command::Export { graph } => export(cli, graph),
    }
}

fn load_graph(path: &Path) -> anyhow::Result<ComputationGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let graph = serial::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    graph
        .ensure_valid()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(graph)
}

/// Writes `text` to `out/name` when `--out` is given, else to stdout.
fn emit(cli: &Cli, name: &str, text: &str) -> anyhow::Result<()> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn infer(cli: &Cli, path: &Path) -> Res {
    let graph = load_graph(path)?;
    let props = infer_graph_properties(&graph).map_err(anyhow::Error::from)?;
    let mut s = String::new();
    match cli.format {
        Format::Csv => {
            s.push_str("input,output,depth,shape,mixing\n");
            for (pair, p) in &props {
                let _ = writeln!(
                    s,
                    "{},{},{},\"{}\",{}",
                    pair.input, pair.output, p.depth.count, p.shape, p.mixing
                );
            }
            emit(cli, "properties.csv", &s)?;
        }
        Format::Text => {
            for (pair, p) in &props {
                let _ = writeln!(s, "input {} -> output {}", pair.input, pair.output);
                s.push_str(&p.render());
                s.push('\n');
            }
            emit(cli, "properties.txt", &s)?;
        }
        Format::Dot => return Err(anyhow!("infer supports --format text or csv").into()),
    }
    Ok(())
}

fn synth(cli: &Cli, cfg: &RunConfig, path: &Path) -> Res {
    let seed = cfg.seed(cli.seed)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: SynthTarget =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if spec.target.is_empty() {
        return Err(anyhow!("target specifies no property").into());
    }
    let mut fixed: Vec<usize> = spec.target.shape.iter().map(|s| s.channels()).collect();
    fixed.push(spec.input.channels());
    let full = op_catalog(&cfg.catalog.with_fixed_features(&fixed)).map_err(anyhow::Error::from)?;
    let catalog = if cfg.synthesis.compress {
        representatives(&compress_catalog(&full, &spec.input))
    } else {
        full
    };
    let base = SynthesisTask::new(spec.input.clone(), spec.target.clone(), catalog);
    let limits = SynthesisLimits {
        max_steps: cfg.synthesis.max_steps,
        extra_steps: cfg.synthesis.extra_steps,
        max_evaluations: cfg.synthesis.max_evaluations,
        ..base.limits
    };
    let task = base
        .with_limits(limits)
        .with_execution(cfg.synthesis.execution);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match cfg.synthesis.algorithm {
        Algorithm::Greedy => greedy_synthesize(&task),
        Algorithm::Stochastic => stochastic_synthesize(&task, &mut rng),
        Algorithm::Enumerative => enumerative_synthesize(&task, &mut rng),
    };
    write_synth_outputs(cli, &spec.input, &result)?;
    match &result.outcome {
        Outcome::Satisfied(_) => Ok(()),
        Outcome::Infeasible => Err(Failure::Infeasible(format!(
            "no chain can reach {}",
            spec.target
        ))),
        Outcome::Failed(why) => Err(Failure::SynthesisFailed(why.clone())),
    }
}

fn trace_csv(result: &SynthesisResult) -> String {
    let mut s = String::from("step,op,mixing,depth,shape,total\n");
    for (i, t) in result.trace.iter().enumerate() {
        let op = t.op.as_ref().map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{i},\"{op}\",{},{},{},{}",
            t.distances.mixing, t.distances.depth, t.distances.shape, t.total
        );
    }
    s
}

fn write_synth_outputs(
    cli: &Cli,
    input: &TensorShape,
    result: &SynthesisResult,
) -> anyhow::Result<()> {
    let trace = match cli.format {
        Format::Csv => trace_csv(result),
        _ => result.to_string(),
    };
    let Some(dir) = &cli.out else {
        print!("{trace}");
        return Ok(());
    };
    let trace_name = if cli.format == Format::Csv {
        "trace.csv"
    } else {
        "trace.txt"
    };
    emit(cli, trace_name, &trace)?;
    if let Some(ops) = result.ops() {
        let graph = chain_graph(input.clone(), ops);
        emit(cli, "subgraph.json", &serial::to_json(&graph))?;
        if cli.format == Format::Dot {
            emit(cli, "subgraph.dot", &serial::to_dot(&graph))?;
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn evolve(cli: &Cli, cfg: &RunConfig, path: &Path) -> Res {
    let seed = cfg.seed(cli.seed)?;
    let graph = load_graph(path)?;
    let dir = cli
        .out
        .as_ref()
        .ok_or_else(|| anyhow!("evolve needs --out for its history and Pareto files"))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let history_path = dir.join("history.jsonl");
    let mut history_file = fs::File::create(&history_path)
        .with_context(|| format!("creating {}", history_path.display()))?;
    let ecfg = cfg.evolve_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut write_error = None;
    let history = evolve_with_sink(&graph, &StaticEvaluator, &ecfg, &mut rng, &mut |event| match event {
        TrialEvent::Inserted { individual: ind, line } => {
            if let Err(e) = history_file.write_all(format!("{line}\n").as_bytes()) {
                write_error.get_or_insert(e);
            }
            let m = &ind.metrics;
            match ind.trial {
                Some(t) => println!(
                    "trial {t:>4}  parent {:>4}  id {:>4}  accuracy {:.4}  flops {:>10}  params {:>8}",
                    ind.parent.unwrap_or_default(),
                    ind.id,
                    m.accuracy_proxy,
                    m.flops,
                    m.params
                ),
                None => println!(
                    "seed        id {:>4}  accuracy {:.4}  flops {:>10}  params {:>8}",
                    ind.id, m.accuracy_proxy, m.flops, m.params
                ),
            }
        }
        TrialEvent::Failed(f) => {
            println!("trial {:>4}  parent {:>4}  failed: {}", f.trial, f.parent, f.reason.lines().next().unwrap_or(""));
        }
    })
    .map_err(anyhow::Error::from)?;
    if let Some(e) = write_error {
        return Err(anyhow::Error::from(e).context("writing history").into());
    }
    for &secondary in &ecfg.secondaries {
        let name = format!("pareto_{}.csv", secondary.name());
        let csv = history.front_csv(ecfg.primary, secondary);
        fs::write(dir.join(&name), csv).with_context(|| format!("writing {name}"))?;
    }
    println!(
        "{} individuals, {} failed trials; history in {}",
        history.individuals.len(),
        history.failures.len(),
        history_path.display()
    );
    Ok(())
}

fn oracle(cli: &Cli, cfg: &RunConfig, corrupt: Option<&str>) -> Res {
    let corrupt = match corrupt {
        None => None,
        Some(k) => Some(OpKind::parse(k).ok_or_else(|| anyhow!("unknown op kind `{k}`"))?),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let audit = cfg.audit_config(seed, corrupt)?;
    let report = oracle_check(&audit).map_err(anyhow::Error::from)?;
    match cli.format {
        Format::Text => emit(cli, "oracle_report.txt", &report.render())?,
        _ => {
            let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n";
            emit(cli, "oracle_report.json", &json)?;
        }
    }
    if report.is_ok() {
        Ok(())
    } else {
        let names: Vec<String> = report
            .mixing_violations
            .iter()
            .map(|v| v.ops.join(" -> "))
            .collect();
        Err(Failure::Violation(format!(
            "{} mixing, {} semiring, {} covering, {} monotonicity violation(s){}",
            report.mixing_violations.len(),
            report.semiring_violations.len(),
            report.covering.uncovered.len(),
            report.covering.violations.len(),
            if names.is_empty() {
                String::new()
            } else {
                format!(": {}", names.join(", "))
            }
        )))
    }
}

fn export(cli: &Cli, path: &Path) -> Res {
    let graph = load_graph(path)?;
    match cli.format {
        Format::Text => emit(cli, "graph.json", &serial::to_json(&graph))?,
        Format::Dot => emit(cli, "graph.dot", &serial::to_dot(&graph))?,
        Format::Csv => {
            let shapes = graph.shapes().map_err(anyhow::Error::from)?;
            let mut s = String::from("id,op,inputs,shape,block\n");
            for (id, node) in &graph.nodes {
                let inputs: Vec<String> = node.inputs.iter().map(|n| n.to_string()).collect();
                let block = graph
                    .block_of(*id)
                    .map(|b| graph.blocks[b].label.clone())
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{id},\"{}\",{},\"{}\",{block}",
                    node.op,
                    inputs.join(" "),
                    shapes[id]
                );
            }
            emit(cli, "graph.csv", &s)?;
        }
    }
    Ok(())
}
