use rand::seq::SliceRandom;
use rand::Rng;

use super::{trace_step, Outcome, SynthesisResult, SynthesisTask};
use crate::graph::PrimitiveOp;
use crate::properties::{satisfies, PropertyState};

struct Search<'a, R: ?Sized> {
    task: &'a SynthesisTask,
    rng: &'a mut R,
    evaluations: u64,
    path: Vec<usize>,
}

enum Found {
    Yes,
    No,
    Budget,
}

impl<R: Rng + ?Sized> Search<'_, R> {
    fn visit(&mut self, state: &PropertyState, remaining: usize) -> Found {
        if remaining == 0 {
            return if satisfies(state, &self.task.target) {
                Found::Yes
            } else {
                Found::No
            };
        }
        let mut order: Vec<usize> = (0..self.task.catalog.len()).collect();
        order.shuffle(self.rng);
        for i in order {
            if self.evaluations >= self.task.limits.max_evaluations {
                return Found::Budget;
            }
            self.evaluations += 1;
            let op = &self.task.catalog[i];
            if !op.is_simple() {
                continue;
            }
            // only shape failures prune
            let Ok(next) = state.append(op) else { continue };
            self.path.push(i);
            match self.visit(&next, remaining - 1) {
                Found::No => {
                    self.path.pop();
                }
                other => return other,
            }
        }
        Found::No
    }
}

/// Tries every chain of length 0, 1, 2, ... (each level in a fresh random order) and
/// returns the first that satisfies the target, which is therefore of minimum length.
pub fn enumerative_synthesize<R: Rng + ?Sized>(
    task: &SynthesisTask,
    rng: &mut R,
) -> SynthesisResult {
    let model = task.model();
    let mut result = SynthesisResult {
        outcome: Outcome::Infeasible,
        steps: 0,
        distance_evaluations: 0,
        trace: vec![trace_step(&model, None, &task.initial)],
    };
    if !result.trace[0].total.is_finite() {
        return result;
    }
    let mut search = Search {
        task,
        rng,
        evaluations: 0,
        path: Vec::new(),
    };
    for len in 0..=task.limits.max_steps {
        search.evaluations += u64::from(len == 0);
        match search.visit(&task.initial, len) {
            Found::Yes => {
                let ops: Vec<PrimitiveOp> = search
                    .path
                    .iter()
                    .map(|&i| task.catalog[i].clone())
                    .collect();
                let mut state = task.initial.clone();
                for op in &ops {
                    state = state.append(op).expect("found chain applies");
                    result.trace.push(trace_step(&model, Some(op), &state));
                }
                result.steps = ops.len();
                result.distance_evaluations = search.evaluations;
                result.outcome = Outcome::Satisfied(ops);
                return result;
            }
            Found::Budget => {
                result.distance_evaluations = search.evaluations;
                result.outcome = Outcome::Failed("budget".into());
                return result;
            }
            Found::No => {}
        }
    }
    result.distance_evaluations = search.evaluations;
    result.outcome = Outcome::Failed("step limit".into());
    result
}
