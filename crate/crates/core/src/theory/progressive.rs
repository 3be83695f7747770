use serde::Serialize;

use super::search::{parallel_search, universal_search, Countdown, SteppedTask, TheoryError};
use super::{Domain, MeteredDistance};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TheoryOutcome<Op> {
    Satisfied(Vec<Op>),
    Infeasible,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryResult<Op> {
    pub outcome: TheoryOutcome<Op>,
    pub iterations: usize,
    pub total_steps: u64,
    /// Steps spent searching in each iteration.
    pub iteration_steps: Vec<u64>,
    /// Distance before the first and after every iteration.
    pub distances: Vec<f64>,
}

impl<Op> TheoryResult<Op> {
    fn start(d0: f64) -> Self {
        Self {
            outcome: TheoryOutcome::Infeasible,
            iterations: 0,
            total_steps: 0,
            iteration_steps: Vec::new(),
            distances: vec![d0],
        }
    }

    pub fn ops(&self) -> Option<&[Op]> {
        match &self.outcome {
            TheoryOutcome::Satisfied(ops) => Some(ops),
            _ => None,
        }
    }
}

/// Condition task for candidate program `next`: costs the distance's declared steps.
fn verifier<'a, P>(
    next: Option<P>,
    d: &'a impl MeteredDistance<P>,
    accept: impl Fn(f64) -> bool,
) -> Box<dyn SteppedTask + 'a> {
    match next {
        None => Box::new(Countdown::new(1, false)),
        Some(p) => {
            let (value, cost) = d.eval(&p);
            Box::new(Countdown::new(cost, accept(value)))
        }
    }
}

/// Each iteration races `d(t(p)) + epsilon <= d(p)` over the covering and appends the
/// first transformation whose check finishes.
pub fn parallel_progressive_synthesize<D: Domain>(
    domain: &D,
    p0: &D::Program,
    d: &impl MeteredDistance<D::Program>,
    covering: &[D::Op],
    epsilon: f64,
    budget: u64,
) -> TheoryResult<D::Op> {
    let mut p = p0.clone();
    let mut current = d.value(&p);
    let mut result = TheoryResult::start(current);
    if current.is_infinite() {
        return result;
    }
    let mut ops = Vec::new();
    while current > 0.0 {
        let tasks: Vec<Box<dyn SteppedTask + '_>> = covering
            .iter()
            .map(|t| verifier(domain.apply(&p, t), d, |v| v + epsilon <= current))
            .collect();
        match parallel_search(tasks, budget.saturating_sub(result.total_steps)) {
            Ok(hit) => {
                result.total_steps += hit.total_steps;
                result.iteration_steps.push(hit.total_steps);
                let t = covering[hit.winner].clone();
                p = domain.apply(&p, &t).expect("winner applies");
                current = d.value(&p);
                result.distances.push(current);
                ops.push(t);
            }
            Err(e) => {
                if let TheoryError::NoneSatisfied { steps } = e {
                    result.total_steps += steps;
                }
                result.iterations = ops.len();
                result.outcome = TheoryOutcome::Failed(e.to_string());
                return result;
            }
        }
    }
    result.iterations = ops.len();
    result.outcome = TheoryOutcome::Satisfied(ops);
    result
}

/// Each iteration runs a universal search over strings of the alphabet for one with
/// `d(t(p)) < d(p)`; no covering set is needed.
pub fn universal_progressive_synthesize<D: Domain>(
    domain: &D,
    p0: &D::Program,
    d: &impl MeteredDistance<D::Program>,
    max_phase: usize,
    budget: u64,
) -> TheoryResult<D::Op> {
    let alphabet = domain.alphabet();
    let mut p = p0.clone();
    let mut current = d.value(&p);
    let mut result = TheoryResult::start(current);
    if current.is_infinite() {
        return result;
    }
    let mut ops = Vec::new();
    while current > 0.0 {
        let apply_all = |s: &[usize]| {
            s.iter()
                .try_fold(p.clone(), |q, &i| domain.apply(&q, &alphabet[i]))
        };
        let searched = universal_search(
            alphabet.len(),
            |s| verifier(apply_all(s), d, |v| v < current),
            max_phase,
            budget.saturating_sub(result.total_steps),
        );
        match searched {
            Ok(hit) => {
                result.total_steps += hit.total_steps;
                result.iteration_steps.push(hit.total_steps);
                p = apply_all(&hit.winner).expect("winner applies");
                current = d.value(&p);
                result.distances.push(current);
                ops.extend(hit.winner.iter().map(|&i| alphabet[i].clone()));
            }
            Err(e) => {
                result.iterations = result.iteration_steps.len();
                result.outcome = TheoryOutcome::Failed(e.to_string());
                return result;
            }
        }
    }
    result.iterations = result.iteration_steps.len();
    result.outcome = TheoryOutcome::Satisfied(ops);
    result
}

/// Greedy over single ops: evaluates every op in full each iteration and takes the
/// first strict minimum. Stalls when no single op lowers the distance.
pub fn greedy_progressive<D: Domain>(
    domain: &D,
    p0: &D::Program,
    d: &impl MeteredDistance<D::Program>,
    max_iterations: usize,
) -> TheoryResult<D::Op> {
    let alphabet = domain.alphabet();
    let mut p = p0.clone();
    let mut current = d.value(&p);
    let mut result = TheoryResult::start(current);
    if current.is_infinite() {
        return result;
    }
    let mut ops = Vec::new();
    while current > 0.0 {
        if ops.len() >= max_iterations {
            result.outcome = TheoryOutcome::Failed("iteration limit".into());
            return result;
        }
        let mut best: Option<(f64, usize, D::Program)> = None;
        let mut steps = 0;
        for (i, t) in alphabet.iter().enumerate() {
            let Some(q) = domain.apply(&p, t) else {
                steps += 1;
                continue;
            };
            let (v, cost) = d.eval(&q);
            steps += cost;
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, i, q));
            }
        }
        result.total_steps += steps;
        result.iteration_steps.push(steps);
        match best {
            Some((v, i, q)) if v < current => {
                p = q;
                current = v;
                result.distances.push(v);
                ops.push(alphabet[i].clone());
            }
            _ => {
                result.iterations = ops.len();
                result.outcome = TheoryOutcome::Failed("no single op lowers the distance".into());
                return result;
            }
        }
    }
    result.iterations = ops.len();
    result.outcome = TheoryOutcome::Satisfied(ops);
    result
}

/// `d(p) = |A(p)|`, or infinity when `A` reports infeasible.
pub fn distance_from_algorithm<P, Op>(
    algorithm: impl Fn(&P) -> Option<Vec<Op>>,
) -> impl Fn(&P) -> f64 {
    move |p| algorithm(p).map_or(f64::INFINITY, |ops| ops.len() as f64)
}

/// Metered distance induced by an algorithm that reports its own step count.
pub struct AlgorithmDistance<F> {
    algorithm: F,
}

impl<F> AlgorithmDistance<F> {
    pub fn new(algorithm: F) -> Self {
        Self { algorithm }
    }
}

impl<P, Op, F> MeteredDistance<P> for AlgorithmDistance<F>
where
    F: Fn(&P) -> (Option<Vec<Op>>, u64),
{
    fn eval(&self, p: &P) -> (f64, u64) {
        let (ops, steps) = (self.algorithm)(p);
        (ops.map_or(f64::INFINITY, |o| o.len() as f64), steps.max(1))
    }
}

/// First program (in the given order) with `0 < d < inf` for which no op of the
/// covering lowers `d` by at least `epsilon`.
pub fn check_uniform_covering<D: Domain>(
    domain: &D,
    programs: &[D::Program],
    d: impl Fn(&D::Program) -> f64,
    covering: &[D::Op],
    epsilon: f64,
) -> Result<(), D::Program> {
    for p in programs {
        let v = d(p);
        if v == 0.0 || v.is_infinite() {
            continue;
        }
        let covered = covering
            .iter()
            .filter_map(|t| domain.apply(p, t))
            .any(|q| d(&q) + epsilon <= v);
        if !covered {
            return Err(p.clone());
        }
    }
    Ok(())
}
