//! Cross-checks of the abstract semantics against the reference interpreter, the
//! semiring laws, and the covering and monotonicity conditions of the distances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distances::{covering_check, CoveringReport};
use crate::evolve::PropertyMutation;
use crate::graph::{op_catalog, CatalogConfig, CatalogError, OpKind, PrimitiveOp, TensorShape};
use crate::par::Execution;
use crate::properties::{
    abstract_mixing, linearity, loc_add, loc_mul, mix_compose, Linearity, Loc, MixingMatrix,
    PropertyState,
};
use crate::refexec::{
    concrete_mixing, concrete_mixing_chain, linearity_test, oracle_shape, spatial_len_for,
    OracleConfig,
};
use crate::sample::random_task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub catalog: CatalogConfig,
    /// Restricts every catalog the audit builds to these kinds.
    pub kinds: Option<Vec<OpKind>>,
    /// Ranks every single op is checked at.
    pub ranks: Vec<usize>,
    pub chains: usize,
    pub max_chain_len: usize,
    pub chain_rank: usize,
    pub covering_samples: usize,
    pub epsilon: u32,
    pub seed: u64,
    pub execution: Execution,
    /// Fault injection: pretend ops of this kind mix everything with everything.
    pub corrupt: Option<OpKind>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            catalog: CatalogConfig::default(),
            kinds: None,
            ranks: vec![3, 4],
            chains: 200,
            max_chain_len: 3,
            chain_rank: 3,
            covering_samples: 300,
            epsilon: 1,
            seed: 0,
            execution: Execution::default(),
            corrupt: None,
        }
    }
}

/// Abstract and concrete mixing differ for an op or chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingViolation {
    pub ops: Vec<String>,
    pub shape: TensorShape,
    pub abstract_mixing: String,
    pub concrete_mixing: String,
    /// The abstract matrix claims more mixing than the interpreter shows.
    pub unsound: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AuditReport {
    pub ops_checked: usize,
    pub chains_checked: usize,
    /// Requested chains that could not be drawn or run.
    pub chains_skipped: usize,
    /// Draws rejected before execution because a shape failed or was too large.
    pub chains_redrawn: usize,
    pub semiring_triples: usize,
    pub semiring_violations: Vec<String>,
    pub mixing_violations: Vec<MixingViolation>,
    pub covering: CoveringReport,
    /// Ops whose linearity class disagrees with a concrete test. Informational.
    pub linearity_notes: Vec<String>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.semiring_violations.is_empty()
            && self.mixing_violations.is_empty()
            && self.covering.is_ok()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(&format!(
            "semiring   triples {:>4}  violations {}\n",
            self.semiring_triples,
            self.semiring_violations.len()
        ));
        for v in &self.semiring_violations {
            s.push_str(&format!("  {v}\n"));
        }
        s.push_str(&format!(
            "mixing     ops {:>4}  chains {:>4} (skipped {}, redrawn {})  violations {}\n",
            self.ops_checked,
            self.chains_checked,
            self.chains_skipped,
            self.chains_redrawn,
            self.mixing_violations.len()
        ));
        for v in &self.mixing_violations {
            s.push_str(&format!(
                "  {} at {}: abstract {} concrete {}{}\n",
                v.ops.join(" -> "),
                v.shape,
                v.abstract_mixing,
                v.concrete_mixing,
                if v.unsound { " (unsound)" } else { "" }
            ));
        }
        s.push_str("covering   ");
        s.push_str(&self.covering.render());
        for n in &self.linearity_notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s.push_str(if self.is_ok() {
            "all checks passed\n"
        } else {
            "CHECKS FAILED\n"
        });
        s
    }
}

/// Every associativity, commutativity, distributivity, identity and annihilation law
/// over all triples of locality values.
pub fn semiring_violations() -> (usize, Vec<String>) {
    let all = [Loc::X, Loc::O, Loc::M, Loc::A];
    let mut bad = Vec::new();
    let mut triples = 0;
    for &y in &all {
        for &z in &all {
            for &w in &all {
                triples += 1;
                let laws = [
                    (
                        "add assoc",
                        loc_add(loc_add(y, z), w),
                        loc_add(y, loc_add(z, w)),
                    ),
                    (
                        "mul assoc",
                        loc_mul(loc_mul(y, z), w),
                        loc_mul(y, loc_mul(z, w)),
                    ),
                    (
                        "left distrib",
                        loc_mul(y, loc_add(z, w)),
                        loc_add(loc_mul(y, z), loc_mul(y, w)),
                    ),
                    (
                        "right distrib",
                        loc_mul(loc_add(z, w), y),
                        loc_add(loc_mul(z, y), loc_mul(w, y)),
                    ),
                ];
                for (law, a, b) in laws {
                    if a != b {
                        bad.push(format!("{law} fails at ({y:?}, {z:?}, {w:?})"));
                    }
                }
            }
            if loc_add(y, z) != loc_add(z, y) {
                bad.push(format!("add comm fails at ({y:?}, {z:?})"));
            }
            if loc_mul(y, z) != loc_mul(z, y) {
                bad.push(format!("mul comm fails at ({y:?}, {z:?})"));
            }
        }
        if loc_add(y, Loc::X) != y || loc_mul(y, Loc::O) != y || loc_mul(y, Loc::X) != Loc::X {
            bad.push(format!("identity or annihilator fails at {y:?}"));
        }
    }
    (triples, bad)
}

fn local_mixing(op: &PrimitiveOp, rank: usize, corrupt: Option<OpKind>) -> MixingMatrix {
    if corrupt == Some(op.kind()) {
        MixingMatrix::filled(rank, rank, Loc::A)
    } else {
        abstract_mixing(op, rank)
    }
}

fn chain_abstract(ops: &[PrimitiveOp], rank: usize, corrupt: Option<OpKind>) -> MixingMatrix {
    ops.iter().fold(MixingMatrix::identity(rank), |u, op| {
        mix_compose(&local_mixing(op, rank, corrupt), &u).expect("same rank")
    })
}

fn compare(
    ops: &[PrimitiveOp],
    shape: &TensorShape,
    abs: MixingMatrix,
    concrete: MixingMatrix,
) -> Option<MixingViolation> {
    (abs != concrete).then(|| MixingViolation {
        ops: ops.iter().map(|o| o.to_string()).collect(),
        shape: shape.clone(),
        unsound: !abs.le(&concrete),
        abstract_mixing: abs.to_string(),
        concrete_mixing: concrete.to_string(),
    })
}

/// Chain input shape for the interpreter: batch 2, a spatial extent past the receptive
/// field, and channels that every grouping in the catalog divides.
fn chain_shape(ops: &[PrimitiveOp], rank: usize, channels: usize) -> TensorShape {
    let len = spatial_len_for(ops);
    let mut dims = vec![2];
    dims.extend(std::iter::repeat_n(len, rank - 2));
    dims.push(channels);
    TensorShape::new(dims).expect("positive dims")
}

impl AuditConfig {
    fn restrict(&self, catalog: Vec<PrimitiveOp>) -> Vec<PrimitiveOp> {
        match &self.kinds {
            Some(kinds) => catalog
                .into_iter()
                .filter(|op| kinds.contains(&op.kind()))
                .collect(),
            None => catalog,
        }
    }
}

pub fn oracle_check(cfg: &AuditConfig) -> Result<AuditReport, CatalogError> {
    let catalog = cfg.restrict(op_catalog(&cfg.catalog)?);
    let oracle = OracleConfig {
        seed: cfg.seed ^ OracleConfig::default().seed,
        ..OracleConfig::default()
    };
    let mut report = AuditReport::default();
    let (triples, bad) = semiring_violations();
    report.semiring_triples = triples;
    report.semiring_violations = bad;
    if catalog.is_empty() {
        report
            .warnings
            .push("catalog is empty; op checks are vacuous".into());
        return Ok(report);
    }

    let cases: Vec<(PrimitiveOp, usize)> = cfg
        .ranks
        .iter()
        .flat_map(|&r| catalog.iter().map(move |op| (op.clone(), r)))
        .collect();
    let single = cfg.execution.map(&cases, |_, (op, rank)| {
        let shape = oracle_shape(op, *rank);
        match concrete_mixing(op, &shape, &oracle) {
            Ok(c) => Ok(compare(
                std::slice::from_ref(op),
                &shape,
                local_mixing(op, *rank, cfg.corrupt),
                c,
            )),
            Err(e) => Err(format!("{op} at {shape}: {e}")),
        }
    });
    for r in single {
        match r {
            Ok(v) => {
                report.ops_checked += 1;
                report.mixing_violations.extend(v);
            }
            Err(e) => report.warnings.push(e),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let simple: Vec<&PrimitiveOp> = catalog.iter().filter(|o| o.is_simple()).collect();
    let groups = cfg.catalog.groups.iter().copied().max().unwrap_or(1);
    let channels = (2 * groups).max(4);
    // chains the interpreter cannot run (a shape fails or exceeds the element cap) are
    // redrawn, up to a bounded number of attempts
    let fits = |ops: &[PrimitiveOp]| {
        let mut shape = chain_shape(ops, cfg.chain_rank, channels);
        if shape.num_elements() > oracle.cap {
            return false;
        }
        ops.iter().all(|op| match op.apply_shape(&shape) {
            Ok(next) if next.num_elements() <= oracle.cap => {
                shape = next;
                true
            }
            _ => false,
        })
    };
    let chain_count = if simple.is_empty() { 0 } else { cfg.chains };
    let mut chains: Vec<Vec<PrimitiveOp>> = Vec::with_capacity(chain_count);
    let mut attempts = 0;
    while chains.len() < chain_count && attempts < chain_count.saturating_mul(50) {
        attempts += 1;
        let len = rng.gen_range(1..=cfg.max_chain_len.max(1));
        let ops: Vec<PrimitiveOp> = (0..len)
            .map(|_| (*simple.choose(&mut rng).expect("simple ops")).clone())
            .collect();
        if fits(&ops) {
            chains.push(ops);
        } else {
            report.chains_redrawn += 1;
        }
    }
    report.chains_skipped += chain_count - chains.len();
    let results = cfg.execution.map(&chains, |_, ops| {
        let shape = chain_shape(ops, cfg.chain_rank, channels);
        let concrete = concrete_mixing_chain(ops, &shape, &oracle).ok()?;
        Some(compare(
            ops,
            &shape,
            chain_abstract(ops, cfg.chain_rank, cfg.corrupt),
            concrete,
        ))
    });
    for r in results {
        match r {
            Some(v) => {
                report.chains_checked += 1;
                report.mixing_violations.extend(v);
            }
            None => report.chains_skipped += 1,
        }
    }

    for op in &catalog {
        let shape = oracle_shape(op, 4);
        let claimed = linearity(op.kind()) == Linearity::Linear;
        if claimed && !linearity_test(op, &shape, 3, cfg.seed) {
            report.linearity_notes.push(format!(
                "{op} is classed linear but fails a superposition test"
            ));
        }
    }

    let samples: Vec<(PropertyState, crate::properties::TargetSpec)> = (0..cfg.covering_samples)
        .map(|_| {
            let task = random_task(&mut rng, &catalog, 6, Some(&PropertyMutation::default()));
            let cut = rng.gen_range(0..=task.chain.len());
            let state = PropertyState::identity(task.shape.clone())
                .append_all(&task.chain[..cut])
                .expect("prefix of an applicable chain");
            (state, task.target)
        })
        .collect();
    // each sample is checked against the catalog synthesis would use for it, which
    // carries the target's channel count as a fixed feature size
    let per_sample = cfg.execution.map(&samples, |_, (state, target)| {
        let mut fixed: Vec<usize> = target.shape.iter().map(|s| s.channels()).collect();
        fixed.push(state.shape.channels());
        let catalog = cfg.restrict(
            op_catalog(&cfg.catalog.with_fixed_features(&fixed)).expect("grids were checked"),
        );
        covering_check(
            &catalog,
            std::slice::from_ref(&(state.clone(), target.clone())),
            cfg.epsilon,
        )
    });
    report.covering.samples = samples.len();
    for (i, r) in per_sample.into_iter().enumerate() {
        report.covering.checked += r.checked;
        report
            .covering
            .uncovered
            .extend(r.uncovered.iter().map(|_| i));
        report
            .covering
            .violations
            .extend(r.violations.into_iter().map(|mut v| {
                v.sample = i;
                v
            }));
    }
    Ok(report)
}
