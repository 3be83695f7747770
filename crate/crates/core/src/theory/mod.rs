//! Step-metered search: round-robin parallel search, phase-structured universal search,
//! and the progressive synthesizers built on them. "Parallel" means deterministic
//! cooperative stepping, so step counts are exact and reproducible.

mod nas;
mod progressive;
mod search;
pub mod toy;

pub use nas::{NasDistance, NasDomain};
pub use progressive::{
    check_uniform_covering, distance_from_algorithm, greedy_progressive,
    parallel_progressive_synthesize, universal_progressive_synthesize, AlgorithmDistance,
    TheoryOutcome, TheoryResult,
};
pub use search::{
    parallel_search, universal_search, universal_search_bound, Countdown, SearchHit, SteppedTask,
    TheoryError,
};

use std::fmt::Debug;

/// A program space with primitive transformations indexed by position in `alphabet`.
pub trait Domain {
    type Program: Clone + Debug;
    type Op: Clone + Debug;

    fn alphabet(&self) -> Vec<Self::Op>;

    /// `None` when the op does not apply to `p`.
    fn apply(&self, p: &Self::Program, op: &Self::Op) -> Option<Self::Program>;
}

/// A distance to a fixed target whose evaluation has a declared step cost `S(d; p)`.
pub trait MeteredDistance<P> {
    /// Distance value (possibly infinite) and the number of steps it takes (at least 1).
    fn eval(&self, p: &P) -> (f64, u64);

    fn value(&self, p: &P) -> f64 {
        self.eval(p).0
    }
}
