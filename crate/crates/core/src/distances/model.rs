use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::value::{d_depth, d_mixing, d_shape, Distance};
use crate::graph::{Features, PrimitiveOp, TensorShape};
use crate::properties::{
    abstract_mixing, count_deficient, linearity, mix_compose, DepthState, Linearity, MixingMatrix,
    PropertyState, TargetSpec,
};

/// Upper bound on the number of shapes explored when computing reachability.
const SHAPE_LIMIT: usize = 4096;

/// Least `S` with `S = I + E × S`, the reflexive-transitive closure of one-step mixing.
fn mixing_star(ops: &[&PrimitiveOp], rank: usize) -> MixingMatrix {
    let mut e = MixingMatrix::none(rank, rank);
    for op in ops {
        e = e.join(&abstract_mixing(op, rank)).expect("square");
    }
    let id = MixingMatrix::identity(rank);
    let mut s = id.clone();
    loop {
        let next = id
            .join(&mix_compose(&e, &s).expect("square"))
            .expect("square");
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Whether some chain over `catalog` can raise `u0` to at least `v`, ignoring shapes.
pub fn feasible_mixing(u0: &MixingMatrix, v: &MixingMatrix, catalog: &[PrimitiveOp]) -> bool {
    if !u0.same_dims(v) || u0.rows() != u0.cols() {
        return false;
    }
    let ops: Vec<&PrimitiveOp> = catalog.iter().filter(|op| op.is_simple()).collect();
    let closure = mix_compose(&mixing_star(&ops, u0.rows()), u0).expect("square");
    v.le(&closure)
}

/// Per-property distances of one state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    pub mixing: Distance,
    pub depth: Distance,
    pub shape: Distance,
}

impl Breakdown {
    pub fn total(&self) -> Distance {
        self.mixing + self.depth + self.shape
    }
}

/// Distances towards one target from states that start at one shape, with the
/// infeasible regions mapped to infinity.
///
/// Feasibility is decided per property: shapes by exact reachability over the catalog,
/// mixing by the closure over the ops usable on some live shape, depth by which
/// linearity kinds those ops offer.
#[derive(Clone, Debug)]
pub struct DistanceModel {
    target: TargetSpec,
    /// Reachable shapes from which the target shape stays reachable.
    live: BTreeSet<TensorShape>,
    closure: MixingMatrix,
    has_linear: bool,
    has_nonlinear: bool,
}

fn channel_cap(catalog: &[PrimitiveOp], start: &TensorShape, target: &TargetSpec) -> usize {
    let mut c = start.channels();
    if let Some(s) = &target.shape {
        c = c.max(s.channels());
    }
    for op in catalog {
        if let Some(Features::Fixed(n)) = op.features() {
            c = c.max(n);
        }
    }
    c * 4
}

impl DistanceModel {
    pub fn new(catalog: &[PrimitiveOp], start: &TensorShape, target: &TargetSpec) -> Self {
        let simple: Vec<&PrimitiveOp> = catalog.iter().filter(|op| op.is_simple()).collect();
        let cap = channel_cap(catalog, start, target);

        // forward reachability with the edge list kept for the backward pass
        let mut edges: BTreeMap<TensorShape, Vec<(usize, TensorShape)>> = BTreeMap::new();
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(s) = queue.pop_front() {
            let mut out = Vec::new();
            for (i, op) in simple.iter().enumerate() {
                let Ok(next) = op.apply_shape(&s) else {
                    continue;
                };
                if next.channels() > cap {
                    continue;
                }
                if seen.len() < SHAPE_LIMIT && seen.insert(next.clone()) {
                    queue.push_back(next.clone());
                }
                if seen.contains(&next) {
                    out.push((i, next));
                }
            }
            edges.insert(s, out);
        }

        let live: BTreeSet<TensorShape> = match &target.shape {
            None => seen,
            Some(goal) => {
                let mut live = BTreeSet::new();
                if seen.contains(goal) {
                    live.insert(goal.clone());
                    let mut changed = true;
                    while changed {
                        changed = false;
                        for (s, out) in &edges {
                            if !live.contains(s) && out.iter().any(|(_, n)| live.contains(n)) {
                                live.insert(s.clone());
                                changed = true;
                            }
                        }
                    }
                }
                live
            }
        };

        let mut usable = BTreeSet::new();
        for (s, out) in &edges {
            if live.contains(s) {
                usable.extend(
                    out.iter()
                        .filter(|(_, n)| live.contains(n))
                        .map(|(i, _)| *i),
                );
            }
        }
        let usable: Vec<&PrimitiveOp> = usable.into_iter().map(|i| simple[i]).collect();
        let closure = mixing_star(&usable, start.rank());
        let kinds: BTreeSet<Linearity> = usable.iter().map(|op| linearity(op.kind())).collect();
        Self {
            target: target.clone(),
            live,
            closure,
            has_linear: kinds.contains(&Linearity::Linear),
            has_nonlinear: kinds.contains(&Linearity::Nonlinear),
        }
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn live_shapes(&self) -> &BTreeSet<TensorShape> {
        &self.live
    }

    pub fn mixing_distance(&self, u: &MixingMatrix) -> Distance {
        let Some(v) = &self.target.mixing else {
            return Distance::ZERO;
        };
        let d = d_mixing(u, v);
        if d.is_zero() || !d.is_finite() || !u.same_dims(&self.closure) {
            return if d.is_zero() { d } else { Distance::Infinite };
        }
        let reach = mix_compose(&self.closure, u).expect("square");
        if count_deficient(&reach, v) > 0 {
            Distance::Infinite
        } else {
            d
        }
    }

    pub fn depth_distance(&self, depth: DepthState) -> Distance {
        let Some(v) = self.target.depth else {
            return Distance::ZERO;
        };
        let d = d_depth(depth.count, v);
        if d.is_zero() {
            return d;
        }
        let reachable = match (self.has_linear, self.has_nonlinear) {
            (true, true) => u32::MAX,
            (true, false) => depth.count + u32::from(depth.last_kind != Some(Linearity::Linear)),
            (false, true) => depth.count + u32::from(depth.last_kind != Some(Linearity::Nonlinear)),
            (false, false) => depth.count,
        };
        if v <= reachable {
            d
        } else {
            Distance::Infinite
        }
    }

    /// Infinite off the live set only when a target shape is set; the set is bounded by a
    /// channel cap, so without a target every shape counts as satisfied.
    pub fn shape_distance(&self, shape: &TensorShape) -> Distance {
        match &self.target.shape {
            None => Distance::ZERO,
            Some(_) if !self.live.contains(shape) => Distance::Infinite,
            Some(goal) => d_shape(shape, goal),
        }
    }

    pub fn breakdown(&self, state: &PropertyState) -> Breakdown {
        Breakdown {
            mixing: self.mixing_distance(&state.mixing),
            depth: self.depth_distance(state.depth),
            shape: self.shape_distance(&state.shape),
        }
    }

    /// Sum of the per-property distances (`d_total`).
    pub fn total(&self, state: &PropertyState) -> Distance {
        self.breakdown(state).total()
    }
}

/// Sum of the plain per-property distances, without catalog feasibility.
pub fn d_total(state: &PropertyState, target: &TargetSpec) -> Distance {
    let m = target
        .mixing
        .as_ref()
        .map_or(Distance::ZERO, |v| d_mixing(&state.mixing, v));
    let d = target
        .depth
        .map_or(Distance::ZERO, |v| d_depth(state.depth.count, v));
    let s = target
        .shape
        .as_ref()
        .map_or(Distance::ZERO, |b| d_shape(&state.shape, b));
    m + d + s
}

/// One op that made a sampled state worse on a monotone property.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityViolation {
    pub sample: usize,
    pub op: String,
    pub property: &'static str,
    pub before: Distance,
    pub after: Distance,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CoveringReport {
    pub samples: usize,
    /// Samples with `0 < d < inf`.
    pub checked: usize,
    /// Indices of checked samples where no op reduced `d_total` by at least epsilon.
    pub uncovered: Vec<usize>,
    pub violations: Vec<MonotonicityViolation>,
}

impl CoveringReport {
    pub fn is_ok(&self) -> bool {
        self.uncovered.is_empty() && self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "samples {:>6}  checked {:>6}  uncovered {:>4}  monotonicity violations {:>4}\n",
            self.samples,
            self.checked,
            self.uncovered.len(),
            self.violations.len()
        );
        for v in &self.violations {
            s.push_str(&format!(
                "  sample {:>5}  {:<28} {:<7} {} -> {}\n",
                v.sample, v.op, v.property, v.before, v.after
            ));
        }
        s
    }
}

/// Checks the uniform-covering and monotonicity conditions on sampled (state, target) pairs.
pub fn covering_check(
    catalog: &[PrimitiveOp],
    samples: &[(PropertyState, TargetSpec)],
    epsilon: u32,
) -> CoveringReport {
    let mut report = CoveringReport {
        samples: samples.len(),
        ..CoveringReport::default()
    };
    for (idx, (state, target)) in samples.iter().enumerate() {
        let model = DistanceModel::new(catalog, &state.shape, target);
        let before = model.breakdown(state);
        let total = before.total();
        let mut covered = false;
        for op in catalog.iter().filter(|op| op.is_simple()) {
            let Ok(next) = state.append(op) else { continue };
            let after = model.breakdown(&next);
            for (property, b, a) in [
                ("mixing", before.mixing, after.mixing),
                ("depth", before.depth, after.depth),
            ] {
                if a > b {
                    report.violations.push(MonotonicityViolation {
                        sample: idx,
                        op: op.to_string(),
                        property,
                        before: b,
                        after: a,
                    });
                }
            }
            if let (Some(b), Some(a)) = (total.finite(), after.total().finite()) {
                if a + epsilon <= b {
                    covered = true;
                }
            }
        }
        if total.is_finite() && !total.is_zero() {
            report.checked += 1;
            if !covered {
                report.uncovered.push(idx);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{op_catalog, CatalogConfig};

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    fn conv3() -> PrimitiveOp {
        PrimitiveOp::Convolution {
            features: Features::SAME,
            kernel: 3,
            stride: 1,
        }
    }

    #[test]
    fn closure_examples() {
        let catalog = op_catalog(&CatalogConfig::default()).unwrap();
        let i = MixingMatrix::identity(4);
        assert!(feasible_mixing(&i, &i, &catalog));
        let conv = abstract_mixing(&conv3(), 4);
        assert!(feasible_mixing(&i, &conv, &catalog));
        let mut batch = MixingMatrix::identity(4);
        batch.set(0, 1, Loc::O);
        assert!(!feasible_mixing(&i, &batch, &catalog));
        let mut bb = MixingMatrix::identity(4);
        bb.set(0, 0, Loc::M);
        assert!(!feasible_mixing(&i, &bb, &catalog));
    }

    use crate::properties::Loc;

    #[test]
    fn model_maps_unreachable_to_infinity() {
        let catalog = vec![
            PrimitiveOp::Dense {
                features: Features::Fixed(8),
            },
            PrimitiveOp::AveragePool { window: 2 },
            PrimitiveOp::ReLU,
        ];
        let s = shape(&[1, 8, 8, 4]);
        let start = PropertyState::identity(s.clone());
        let to6 = TargetSpec {
            shape: Some(shape(&[1, 8, 8, 6])),
            ..TargetSpec::default()
        };
        let m = DistanceModel::new(&catalog, &s, &to6);
        assert_eq!(m.total(&start), Distance::Infinite);
        // only the plain formula is finite
        assert_eq!(d_total(&start, &to6), Distance::Finite(1));

        let to8 = TargetSpec {
            shape: Some(shape(&[1, 4, 4, 8])),
            depth: Some(1),
            ..TargetSpec::default()
        };
        let m = DistanceModel::new(&catalog, &s, &to8);
        assert_eq!(m.total(&start), Distance::Finite(4));
        let conv_target = TargetSpec {
            mixing: Some(abstract_mixing(&conv3(), 4)),
            ..TargetSpec::default()
        };
        // dense then pool reaches the conv matrix
        let m = DistanceModel::new(&catalog, &s, &conv_target);
        assert_eq!(m.total(&start), Distance::Finite(6));
        let keep_shape = TargetSpec {
            shape: Some(s.clone()),
            ..conv_target
        };
        // pooling is no longer usable, so the spatial entries are out of reach
        let m = DistanceModel::new(&catalog, &s, &keep_shape);
        assert_eq!(m.total(&start), Distance::Infinite);
    }

    #[test]
    fn depth_needs_both_kinds() {
        let linear_only = vec![PrimitiveOp::BatchNorm];
        let s = shape(&[1, 4, 4, 4]);
        let t = TargetSpec {
            depth: Some(2),
            ..TargetSpec::default()
        };
        let m = DistanceModel::new(&linear_only, &s, &t);
        assert_eq!(
            m.total(&PropertyState::identity(s.clone())),
            Distance::Infinite
        );
        let t1 = TargetSpec {
            depth: Some(1),
            ..TargetSpec::default()
        };
        let m = DistanceModel::new(&linear_only, &s, &t1);
        assert_eq!(m.total(&PropertyState::identity(s)), Distance::Finite(1));
    }

    #[test]
    fn covering_examples() {
        let catalog = op_catalog(&CatalogConfig::default().with_fixed_features(&[16])).unwrap();
        let s = shape(&[1, 8, 8, 16]);
        let start = PropertyState::identity(s.clone());
        let samples = vec![
            (
                start.clone(),
                TargetSpec {
                    depth: Some(1),
                    ..TargetSpec::default()
                },
            ),
            (
                start.clone(),
                TargetSpec {
                    shape: Some(shape(&[1, 4, 4, 16])),
                    ..TargetSpec::default()
                },
            ),
            (
                PropertyState::identity(shape(&[1, 8, 8, 4])),
                TargetSpec {
                    shape: Some(shape(&[1, 8, 8, 16])),
                    ..TargetSpec::default()
                },
            ),
        ];
        let r = covering_check(&catalog, &samples, 1);
        assert_eq!(r.checked, 3);
        assert!(r.is_ok(), "{}", r.render());

        // a pool halves the spatial deficit without touching the channel term
        let t = &samples[1].1;
        let m = DistanceModel::new(&catalog, &s, t);
        let pooled = start
            .append(&PrimitiveOp::AveragePool { window: 2 })
            .unwrap();
        assert_eq!(m.breakdown(&start).shape, Distance::Finite(2));
        assert_eq!(m.breakdown(&pooled).shape, Distance::ZERO);
        let dense = PrimitiveOp::Dense {
            features: Features::Fixed(16),
        };
        let small = PropertyState::identity(shape(&[1, 8, 8, 4]));
        let m = DistanceModel::new(&catalog, &small.shape, &samples[2].1);
        assert_eq!(m.total(&small.append(&dense).unwrap()), Distance::ZERO);
    }
}
