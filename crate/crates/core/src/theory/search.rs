use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TheoryError {
    #[error("no task satisfied the condition ({steps} steps)")]
    NoneSatisfied { steps: u64 },
    #[error("step budget of {budget} exhausted")]
    Budget { budget: u64 },
    #[error("phase cap {0} reached")]
    PhaseCap(usize),
}

/// A computation advanced one step at a time. `step` returns the result once done.
pub trait SteppedTask {
    fn step(&mut self) -> Option<bool>;

    /// Steps taken so far.
    fn steps(&self) -> u64;
}

/// Finishes with a fixed result after a fixed number of steps (at least one).
#[derive(Clone, Debug)]
pub struct Countdown {
    cost: u64,
    taken: u64,
    result: bool,
}

impl Countdown {
    pub fn new(cost: u64, result: bool) -> Self {
        Self {
            cost: cost.max(1),
            taken: 0,
            result,
        }
    }
}

impl SteppedTask for Countdown {
    fn step(&mut self) -> Option<bool> {
        if self.taken < self.cost {
            self.taken += 1;
        }
        (self.taken == self.cost).then_some(self.result)
    }

    fn steps(&self) -> u64 {
        self.taken
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchHit<T> {
    pub winner: T,
    pub total_steps: u64,
}

/// Steps every unfinished task once per round, in order, and returns the first task to
/// finish with `true`.
pub fn parallel_search(
    mut tasks: Vec<Box<dyn SteppedTask + '_>>,
    budget: u64,
) -> Result<SearchHit<usize>, TheoryError> {
    let mut running: Vec<usize> = (0..tasks.len()).collect();
    let mut total = 0u64;
    while !running.is_empty() {
        let mut still = Vec::with_capacity(running.len());
        for &i in &running {
            if total >= budget {
                return Err(TheoryError::Budget { budget });
            }
            total += 1;
            match tasks[i].step() {
                Some(true) => {
                    return Ok(SearchHit {
                        winner: i,
                        total_steps: total,
                    })
                }
                Some(false) => {}
                None => still.push(i),
            }
        }
        running = still;
    }
    Err(TheoryError::NoneSatisfied { steps: total })
}

fn pow_sat(base: usize, exp: usize) -> u64 {
    (base as u64).checked_pow(exp as u32).unwrap_or(u64::MAX)
}

/// Per-instance step allowance at the end of phase `i`: `max(i, |E|^i)`.
fn allowance(e: usize, i: usize) -> u64 {
    (i as u64).max(pow_sat(e, i))
}

/// All strings of length `len` over `0..e`, in lexicographic order.
fn strings_of_length(e: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..e).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

struct Instance<'a> {
    string: Vec<usize>,
    task: Box<dyn SteppedTask + 'a>,
    done: bool,
}

/// Runs the listed instances round-robin until each has taken `limit` steps or finished.
fn run_to(
    instances: &mut [Instance<'_>],
    which: std::ops::Range<usize>,
    limit: u64,
    total: &mut u64,
    budget: u64,
) -> Result<Option<usize>, TheoryError> {
    loop {
        let mut progressed = false;
        for i in which.clone() {
            let inst = &mut instances[i];
            if inst.done || inst.task.steps() >= limit {
                continue;
            }
            if *total >= budget {
                return Err(TheoryError::Budget { budget });
            }
            *total += 1;
            progressed = true;
            match inst.task.step() {
                Some(true) => return Ok(Some(i)),
                Some(false) => inst.done = true,
                None => {}
            }
        }
        if !progressed {
            return Ok(None);
        }
    }
}

/// Phase `i` starts every string of length `i`, lets those catch up to
/// `max(i-1, |E|^(i-1))` steps, then runs every started string to `max(i, |E|^i)` steps.
/// Returns the first string whose condition finishes `true`.
pub fn universal_search<'a, F>(
    alphabet: usize,
    mut cond: F,
    max_phase: usize,
    budget: u64,
) -> Result<SearchHit<Vec<usize>>, TheoryError>
where
    F: FnMut(&[usize]) -> Box<dyn SteppedTask + 'a>,
{
    let mut instances: Vec<Instance<'a>> = Vec::new();
    let mut total = 0u64;
    for phase in 0..=max_phase {
        let first_new = instances.len();
        if phase == 0 || alphabet > 0 {
            for s in strings_of_length(alphabet, phase) {
                let task = cond(&s);
                instances.push(Instance {
                    string: s,
                    task,
                    done: false,
                });
            }
        }
        let n = instances.len();
        let catch_up = if phase == 0 {
            0
        } else {
            allowance(alphabet, phase - 1)
        };
        let hit = match run_to(&mut instances, first_new..n, catch_up, &mut total, budget)? {
            Some(i) => Some(i),
            None => run_to(
                &mut instances,
                0..n,
                allowance(alphabet, phase),
                &mut total,
                budget,
            )?,
        };
        if let Some(i) = hit {
            return Ok(SearchHit {
                winner: instances.swap_remove(i).string,
                total_steps: total,
            });
        }
    }
    Err(TheoryError::PhaseCap(max_phase))
}

/// Ceiling `2 S^2 |E|^(2D+1) + (D+S)^2` on the steps of a universal search whose
/// satisfier has length `d` and verification cost `s`.
pub fn universal_search_bound(e: usize, d: usize, s: u64) -> u64 {
    let lead = 2u64
        .saturating_mul(s.saturating_mul(s))
        .saturating_mul(pow_sat(e, 2 * d + 1));
    lead.saturating_add((d as u64 + s).pow(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn countdowns(spec: &[(u64, bool)]) -> Vec<Box<dyn SteppedTask>> {
        spec.iter()
            .map(|&(c, r)| Box::new(Countdown::new(c, r)) as Box<dyn SteppedTask>)
            .collect()
    }

    #[test]
    fn parallel_search_examples() {
        let hit = parallel_search(countdowns(&[(5, true)]), u64::MAX).unwrap();
        assert_eq!(hit.total_steps, 5);
        let hit = parallel_search(
            countdowns(&[(9, true), (3, true), (1, false), (7, true)]),
            u64::MAX,
        )
        .unwrap();
        assert_eq!(hit.winner, 1);
        assert!(hit.total_steps <= 4 * 3);
        let hit = parallel_search(countdowns(&[(1, true), (4, false)]), u64::MAX).unwrap();
        assert_eq!((hit.winner, hit.total_steps), (0, 1));
        assert!(matches!(
            parallel_search(countdowns(&[(2, false)]), u64::MAX),
            Err(TheoryError::NoneSatisfied { .. })
        ));
    }

    #[test]
    fn empty_string_returns_in_phase_zero() {
        let hit = universal_search(
            3,
            |s| Box::new(Countdown::new(1, s.is_empty())),
            5,
            u64::MAX,
        )
        .unwrap();
        assert!(hit.winner.is_empty());
        assert_eq!(hit.total_steps, 1);
    }

    #[test]
    fn unary_alphabet_bound() {
        for d in 0..5usize {
            for s in 1..8u64 {
                let hit = universal_search(
                    1,
                    |t| {
                        Box::new(Countdown::new(
                            if t.len() == d { s } else { 1 },
                            t.len() == d,
                        ))
                    },
                    64,
                    u64::MAX,
                )
                .unwrap();
                assert_eq!(hit.winner.len(), d);
                assert!(
                    hit.total_steps <= (d as u64 + s).pow(2),
                    "{d} {s} {}",
                    hit.total_steps
                );
            }
        }
    }

    #[test]
    fn binary_example_bound() {
        let target = [1usize, 0];
        let hit = universal_search(
            2,
            |t| Box::new(Countdown::new(1, t == target)),
            16,
            u64::MAX,
        )
        .unwrap();
        assert_eq!(hit.winner, target);
        assert!(hit.total_steps <= universal_search_bound(2, 2, 1));
    }
}
