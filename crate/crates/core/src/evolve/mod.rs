//! Property mutation, block mutations, Pareto selection and the evolutionary loop.

mod blocks;
mod cost;
mod mutate;
mod pareto;
mod run;

pub use blocks::{
    delete_block, duplicate_block, duplicate_sites, mutate_individual, MutateError, MutationConfig,
    MutationRecord, MutationWeights,
};
pub use cost::{
    graph_fingerprint, static_cost_model, surrogate_accuracy, Cost, EvalError, Evaluator, Metrics,
    StaticEvaluator, SURROGATE_FLOOR,
};
pub use mutate::{mutate_properties, PropertyMutation};
pub use pareto::{pareto_optimal, pareto_weight, select, top_k, Objective, ParetoContext};
pub use run::{
    evolve, evolve_with_sink, EvolveConfig, EvolveError, Individual, PopulationHistory, RecordSink,
    TrialEvent, TrialFailure,
};
