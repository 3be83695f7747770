//! Small synthesis domains with white-box algorithms, used to exercise the theory.

use std::collections::{BTreeMap, VecDeque};

use super::{Domain, MeteredDistance};

/// Programs are counters; the ops add fixed increments.
#[derive(Clone, Debug)]
pub struct Counter {
    pub increments: Vec<u64>,
}

impl Default for Counter {
    fn default() -> Self {
        Self {
            increments: vec![1, 2],
        }
    }
}

impl Domain for Counter {
    type Program = u64;
    type Op = u64;

    fn alphabet(&self) -> Vec<u64> {
        self.increments.clone()
    }

    fn apply(&self, p: &u64, op: &u64) -> Option<u64> {
        p.checked_add(*op)
    }
}

impl Counter {
    /// Shortest increment sequence from `p` to exactly `target` by breadth-first search,
    /// with the number of expanded nodes as its step count.
    pub fn bfs(&self, p: u64, target: u64) -> (Option<Vec<u64>>, u64) {
        if p > target {
            return (None, 1);
        }
        let mut parent: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        let mut queue = VecDeque::from([p]);
        let mut expanded = 0;
        while let Some(x) = queue.pop_front() {
            expanded += 1;
            if x == target {
                let mut ops = Vec::new();
                let mut at = x;
                while at != p {
                    let (prev, op) = parent[&at];
                    ops.push(op);
                    at = prev;
                }
                ops.reverse();
                return (Some(ops), expanded);
            }
            for &inc in &self.increments {
                let y = x + inc;
                if y <= target && y != p && !parent.contains_key(&y) {
                    parent.insert(y, (x, inc));
                    queue.push_back(y);
                }
            }
        }
        (None, expanded)
    }
}

/// Remaining increments of 2 (rounded up) to `target`; evaluation at odd counters is
/// declared `slow` times more expensive.
#[derive(Clone, Debug)]
pub struct CounterDistance {
    pub target: u64,
    pub slow: u64,
}

impl MeteredDistance<u64> for CounterDistance {
    fn eval(&self, p: &u64) -> (f64, u64) {
        let value = if *p > self.target {
            f64::INFINITY
        } else {
            (self.target - p).div_ceil(2) as f64
        };
        let cost = if p % 2 == 1 { self.slow } else { 1 };
        (value, cost)
    }
}

/// Programs are strings over `a`/`b`; the ops append one letter.
#[derive(Clone, Debug, Default)]
pub struct Strings;

impl Domain for Strings {
    type Program = Vec<u8>;
    type Op = u8;

    fn alphabet(&self) -> Vec<u8> {
        vec![b'a', b'b']
    }

    fn apply(&self, p: &Vec<u8>, op: &u8) -> Option<Vec<u8>> {
        let mut q = p.clone();
        q.push(*op);
        Some(q)
    }
}

impl Strings {
    /// Appends the missing suffix of `target`; infeasible unless `p` is a prefix of it.
    /// Restarting from any partial output finishes the same suffix at no extra cost.
    pub fn complete(p: &[u8], target: &[u8]) -> (Option<Vec<u8>>, u64) {
        let steps = p.len() as u64 + 1;
        if target.starts_with(p) {
            (Some(target[p.len()..].to_vec()), steps)
        } else {
            (None, steps)
        }
    }

    /// All strings over `a`/`b` of length at most `max_len`.
    pub fn all_up_to(max_len: usize) -> Vec<Vec<u8>> {
        let mut out = vec![Vec::new()];
        let mut layer = vec![Vec::new()];
        for _ in 0..max_len {
            layer = layer
                .iter()
                .flat_map(|s: &Vec<u8>| {
                    [b'a', b'b'].map(|c| {
                        let mut t = s.clone();
                        t.push(c);
                        t
                    })
                })
                .collect();
            out.extend(layer.iter().cloned());
        }
        out
    }
}

/// Counts whole `ab` pairs still missing towards `(ab)^n`, so a lone `a` never helps.
#[derive(Clone, Debug)]
pub struct PairDistance {
    pub pairs: usize,
}

impl PairDistance {
    pub fn target(&self) -> Vec<u8> {
        b"ab".repeat(self.pairs)
    }
}

impl MeteredDistance<Vec<u8>> for PairDistance {
    fn eval(&self, p: &Vec<u8>) -> (f64, u64) {
        let cost = p.len() as u64 + 1;
        if !self.target().starts_with(p) {
            return (f64::INFINITY, cost);
        }
        ((self.pairs - p.len() / 2) as f64, cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_bfs_is_shortest() {
        let c = Counter::default();
        let (ops, _) = c.bfs(3, 10);
        let ops = ops.unwrap();
        assert_eq!(ops.len(), 4);
        assert_eq!(3 + ops.iter().sum::<u64>(), 10);
        assert_eq!(c.bfs(5, 4).0, None);
        assert_eq!(c.bfs(4, 4).0, Some(vec![]));
    }

    #[test]
    fn pair_distance_values() {
        let d = PairDistance { pairs: 2 };
        assert_eq!(d.value(&b"".to_vec()), 2.0);
        assert_eq!(d.value(&b"a".to_vec()), 2.0);
        assert_eq!(d.value(&b"ab".to_vec()), 1.0);
        assert_eq!(d.value(&b"abab".to_vec()), 0.0);
        assert!(d.value(&b"b".to_vec()).is_infinite());
    }
}
