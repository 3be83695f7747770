use std::fmt::Write as _;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::blocks::{mutate_individual, MutationConfig, MutationRecord};
use super::cost::{EvalError, Evaluator, Metrics};
use super::pareto::{pareto_optimal, select, Objective};
use crate::graph::{serial, ComputationGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub trials: usize,
    /// Selection draws uniformly from this percentage of the population.
    pub k_percent: f64,
    pub primary: Objective,
    pub secondaries: Vec<Objective>,
    pub mutation: MutationConfig,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            k_percent: 25.0,
            primary: Objective::Accuracy,
            secondaries: vec![Objective::Flops, Objective::Params],
            mutation: MutationConfig::default(),
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(format!(
                "k_percent = {} is outside (0, 100]",
                self.k_percent
            ));
        }
        if self.secondaries.is_empty() {
            return Err("at least one secondary objective is required".into());
        }
        if self.secondaries.contains(&self.primary) {
            return Err("the primary objective cannot also be secondary".into());
        }
        self.mutation.validate()
    }
}

/// One evaluated graph of the population.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: usize,
    pub parent: Option<usize>,
    /// None for seed evaluations.
    pub trial: Option<usize>,
    pub eval_seed: u64,
    pub metrics: Metrics,
    pub mutation: Option<MutationRecord>,
    pub graph: ComputationGraph,
}

#[derive(Serialize)]
struct Record<'a> {
    id: usize,
    trial: Option<usize>,
    parent: Option<usize>,
    eval_seed: u64,
    mutation: &'a Option<MutationRecord>,
    metrics: &'a Metrics,
    graph: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub parent: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PopulationHistory {
    pub individuals: Vec<Individual>,
    pub failures: Vec<TrialFailure>,
}

impl PopulationHistory {
    /// Ids of individuals no other strictly improves on in both objectives.
    pub fn front(&self, primary: Objective, secondary: Objective) -> Vec<usize> {
        let points: Vec<(f64, f64)> = self
            .individuals
            .iter()
            .map(|i| (secondary.score(&i.metrics), primary.score(&i.metrics)))
            .collect();
        pareto_optimal(&points)
    }

    /// Every seed evaluation is matched or beaten on both objectives by a front member.
    pub fn front_covers_seed(&self, primary: Objective, secondary: Objective) -> bool {
        let front = self.front(primary, secondary);
        let score = |i: usize| {
            let m = &self.individuals[i].metrics;
            (secondary.score(m), primary.score(m))
        };
        self.individuals
            .iter()
            .enumerate()
            .filter(|(_, ind)| ind.trial.is_none())
            .all(|(s, _)| {
                let p = score(s);
                front
                    .iter()
                    .any(|&f| score(f).0 >= p.0 && score(f).1 >= p.1)
            })
    }

    /// One JSON object per line, in insertion order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ind in &self.individuals {
            out.push_str(&record_line(ind));
            out.push('\n');
        }
        out
    }

    /// Front members as CSV with every objective column.
    pub fn front_csv(&self, primary: Objective, secondary: Objective) -> String {
        let mut front = self.front(primary, secondary);
        front.sort_by(|&a, &b| {
            let (ma, mb) = (&self.individuals[a].metrics, &self.individuals[b].metrics);
            secondary
                .score(ma)
                .total_cmp(&secondary.score(mb))
                .then(a.cmp(&b))
        });
        let mut out = String::from("id,parent,accuracy_proxy,flops,params,throughput_proxy\n");
        for i in front {
            let ind = &self.individuals[i];
            let m = &ind.metrics;
            let parent = ind.parent.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                ind.id, parent, m.accuracy_proxy, m.flops, m.params, m.throughput_proxy
            );
        }
        out
    }
}

fn record_line(ind: &Individual) -> String {
    let record = Record {
        id: ind.id,
        trial: ind.trial,
        parent: ind.parent,
        eval_seed: ind.eval_seed,
        mutation: &ind.mutation,
        metrics: &ind.metrics,
        graph: serde_json::from_str(&serial::to_json(&ind.graph)).expect("graph json"),
    };
    serde_json::to_string(&record).expect("record json")
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("seed graph could not be evaluated: {0}")]
    Seed(#[source] EvalError),
}

/// What the loop reports as it runs.
pub enum TrialEvent<'a> {
    /// A new individual with its history line.
    Inserted {
        individual: &'a Individual,
        line: &'a str,
    },
    Failed(&'a TrialFailure),
}

pub type RecordSink<'a> = dyn FnMut(TrialEvent<'_>) + 'a;

/// Runs the loop and returns the whole history.
pub fn evolve<R: Rng + ?Sized>(
    seed: &ComputationGraph,
    evaluator: &dyn Evaluator,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<PopulationHistory, EvolveError> {
    evolve_with_sink(seed, evaluator, cfg, rng, &mut |_| {})
}

/// Like [`evolve`], reporting each insertion and failure to `sink` as it happens, so an
/// interrupted run can leave a valid history prefix.
pub fn evolve_with_sink<R: Rng + ?Sized>(
    seed: &ComputationGraph,
    evaluator: &dyn Evaluator,
    cfg: &EvolveConfig,
    rng: &mut R,
    sink: &mut RecordSink<'_>,
) -> Result<PopulationHistory, EvolveError> {
    cfg.validate().map_err(EvolveError::Config)?;
    let mut history = PopulationHistory::default();
    // the seed is evaluated twice under different evaluation seeds
    for _ in 0..2 {
        let eval_seed = rng.gen();
        let metrics = evaluator
            .evaluate(seed, eval_seed)
            .map_err(EvolveError::Seed)?;
        let ind = Individual {
            id: history.individuals.len(),
            parent: None,
            trial: None,
            eval_seed,
            metrics,
            mutation: None,
            graph: seed.clone(),
        };
        sink(TrialEvent::Inserted {
            individual: &ind,
            line: &record_line(&ind),
        });
        history.individuals.push(ind);
    }
    for trial in 0..cfg.trials {
        let population: Vec<Metrics> = history.individuals.iter().map(|i| i.metrics).collect();
        let parent = select(
            &population,
            cfg.primary,
            &cfg.secondaries,
            cfg.k_percent,
            rng,
        )
        .expect("population is nonempty");
        let parent_graph = &history.individuals[parent].graph;
        let (graph, record) = match mutate_individual(parent_graph, rng, &cfg.mutation) {
            Ok(child) => child,
            Err(e) => {
                info!("trial {trial}: parent {parent}: mutation failed: {e}");
                let failure = TrialFailure {
                    trial,
                    parent,
                    reason: e.to_string(),
                };
                sink(TrialEvent::Failed(&failure));
                history.failures.push(failure);
                continue;
            }
        };
        let eval_seed = rng.gen();
        let metrics = match evaluator.evaluate(&graph, eval_seed) {
            Ok(m) => m,
            Err(e) => {
                warn!("trial {trial}: evaluation failed: {e}");
                let failure = TrialFailure {
                    trial,
                    parent,
                    reason: e.to_string(),
                };
                sink(TrialEvent::Failed(&failure));
                history.failures.push(failure);
                continue;
            }
        };
        info!(
            "trial {trial}: parent {parent} -> id {} accuracy={:.4} flops={} params={}",
            history.individuals.len(),
            metrics.accuracy_proxy,
            metrics.flops,
            metrics.params
        );
        let ind = Individual {
            id: history.individuals.len(),
            parent: Some(parent),
            trial: Some(trial),
            eval_seed,
            metrics,
            mutation: Some(record),
            graph,
        };
        sink(TrialEvent::Inserted {
            individual: &ind,
            line: &record_line(&ind),
        });
        history.individuals.push(ind);
    }
    Ok(history)
}
