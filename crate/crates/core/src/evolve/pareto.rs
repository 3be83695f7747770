use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cost::Metrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Accuracy,
    Flops,
    Params,
    Throughput,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Accuracy,
        Objective::Flops,
        Objective::Params,
        Objective::Throughput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Accuracy => "accuracy_proxy",
            Objective::Flops => "flops",
            Objective::Params => "params",
            Objective::Throughput => "throughput_proxy",
        }
    }

    pub fn maximize(self) -> bool {
        matches!(self, Objective::Accuracy | Objective::Throughput)
    }

    pub fn raw(self, m: &Metrics) -> f64 {
        match self {
            Objective::Accuracy => m.accuracy_proxy,
            Objective::Flops => m.flops as f64,
            Objective::Params => m.params as f64,
            Objective::Throughput => m.throughput_proxy,
        }
    }

    /// Value oriented so that larger is better.
    pub fn score(self, m: &Metrics) -> f64 {
        if self.maximize() {
            self.raw(m)
        } else {
            -self.raw(m)
        }
    }
}

/// `a` is a strict improvement over `b` on both axes (points are (secondary, primary),
/// larger is better).
fn strictly_better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 && a.1 > b.1
}

/// Indices of points no other point strictly improves on in both coordinates.
pub fn pareto_optimal(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|&q| strictly_better(q, points[i])))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Curve {
    /// One optimal point: L1 distance to it.
    Single((f64, f64)),
    /// All optimal points share the secondary value: gap to the best primary.
    PrimaryOnly(f64),
    /// Polyline in normalized coordinates, secondary axis multiplied by `scale`.
    Polyline {
        vertices: Vec<(f64, f64)>,
        scale: f64,
    },
}

/// Pareto curve of one primary objective against one secondary objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoContext {
    pub primary: Objective,
    pub secondary: Objective,
    /// Optimal points in raw (secondary, primary) coordinates, sorted and deduplicated.
    front: Vec<(f64, f64)>,
    curve: Curve,
}

impl ParetoContext {
    pub fn new(primary: Objective, secondary: Objective, population: &[Metrics]) -> Self {
        let points: Vec<(f64, f64)> = population
            .iter()
            .map(|m| (secondary.score(m), primary.score(m)))
            .collect();
        let mut front: Vec<(f64, f64)> = pareto_optimal(&points)
            .into_iter()
            .map(|i| points[i])
            .collect();
        front.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        front.dedup();
        Self {
            primary,
            secondary,
            curve: Self::curve(&front),
            front,
        }
    }

    fn curve(front: &[(f64, f64)]) -> Curve {
        match front.len() {
            0 => Curve::PrimaryOnly(0.0),
            1 => Curve::Single(front[0]),
            _ => {
                let (first, last) = (front[0], front[front.len() - 1]);
                let dx = last.0 - first.0;
                let dy = last.1 - first.1;
                if dx == 0.0 {
                    return Curve::PrimaryOnly(front.iter().map(|p| p.1).fold(f64::MIN, f64::max));
                }
                let slope = (dy / dx).abs();
                let scale = if slope > 0.0 && slope.is_finite() {
                    slope
                } else {
                    1.0
                };
                Curve::Polyline {
                    vertices: front.iter().map(|&(x, y)| (x * scale, y)).collect(),
                    scale,
                }
            }
        }
    }

    /// True when the curve is a single point or has no spread in the secondary.
    pub fn is_degenerate(&self) -> bool {
        !matches!(self.curve, Curve::Polyline { .. })
    }

    pub fn weight(&self, m: &Metrics) -> f64 {
        pareto_weight((self.secondary.score(m), self.primary.score(m)), self)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Distance from `point` (secondary score, primary score) to the context's curve.
/// Points that no population member strictly improves on weigh 0.
pub fn pareto_weight(point: (f64, f64), context: &ParetoContext) -> f64 {
    if context.front.contains(&point) {
        return 0.0;
    }
    match &context.curve {
        Curve::Single(q) => (point.0 - q.0).abs() + (point.1 - q.1).abs(),
        Curve::PrimaryOnly(best) => (best - point.1).max(0.0),
        Curve::Polyline { vertices, scale } => {
            let p = (point.0 * scale, point.1);
            vertices
                .windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Indices of the `k_percent` lowest weights, at least one, ties broken by index.
pub fn top_k(weights: &[f64], k_percent: f64) -> Vec<usize> {
    let n = weights.len();
    let keep = ((k_percent / 100.0 * n as f64).ceil() as usize).clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    order.truncate(keep);
    order
}

/// Draws a secondary objective, builds a fresh curve against the primary, and returns a
/// uniformly chosen member of the top `k_percent` by Pareto weight.
pub fn select<R: Rng + ?Sized>(
    population: &[Metrics],
    primary: Objective,
    secondaries: &[Objective],
    k_percent: f64,
    rng: &mut R,
) -> Option<usize> {
    if population.is_empty() {
        return None;
    }
    let secondary = *secondaries.choose(rng)?;
    let context = ParetoContext::new(primary, secondary, population);
    let weights: Vec<f64> = population.iter().map(|m| context.weight(m)).collect();
    top_k(&weights, k_percent).choose(rng).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(acc: f64, params: u64) -> Metrics {
        Metrics {
            accuracy_proxy: acc,
            flops: params * 10,
            params,
            throughput_proxy: 1.0,
        }
    }

    #[test]
    fn optimal_points_weigh_zero() {
        let pop = vec![m(0.5, 10), m(0.7, 20), m(0.9, 40), m(0.6, 30), m(0.4, 40)];
        let ctx = ParetoContext::new(Objective::Accuracy, Objective::Params, &pop);
        let w: Vec<f64> = pop.iter().map(|x| ctx.weight(x)).collect();
        assert_eq!(&w[..3], &[0.0, 0.0, 0.0]);
        assert!(w[3] > 0.0 && w[4] > 0.0);
    }

    #[test]
    fn single_point_is_l1() {
        let pop = vec![m(0.9, 10), m(0.5, 12)];
        let ctx = ParetoContext::new(Objective::Accuracy, Objective::Params, &pop);
        assert!(ctx.is_degenerate());
        assert!((ctx.weight(&pop[1]) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn top_k_sizes() {
        let w = [3.0, 1.0, 2.0, 1.0];
        assert_eq!(top_k(&w, 25.0), vec![1]);
        assert_eq!(top_k(&w, 50.0), vec![1, 3]);
        assert_eq!(top_k(&w, 1.0), vec![1]);
        assert_eq!(top_k(&w, 100.0).len(), 4);
    }
}
