use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::graph::TensorShape;
use crate::properties::{count_deficient, MixingMatrix};

/// Extended nonnegative integer. `Finite` always orders below `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(u32),
    Infinite,
}

impl Distance {
    pub const ZERO: Distance = Distance::Finite(0);

    pub fn is_zero(self) -> bool {
        self == Distance::ZERO
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Distance::Finite(v) => Some(v),
            Distance::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Distance::Finite(v) => f64::from(v),
            Distance::Infinite => f64::INFINITY,
        }
    }
}

impl Add for Distance {
    type Output = Distance;

    fn add(self, rhs: Distance) -> Distance {
        match (self, rhs) {
            (Distance::Finite(a), Distance::Finite(b)) => Distance::Finite(a.saturating_add(b)),
            _ => Distance::Infinite,
        }
    }
}

impl Sum for Distance {
    fn sum<I: Iterator<Item = Distance>>(iter: I) -> Distance {
        iter.fold(Distance::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(v) => write!(f, "{v}"),
            Distance::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Distance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Distance::Finite(v) => s.serialize_u32(*v),
            Distance::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u32),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(v) => Ok(Distance::Finite(v)),
            Repr::S(s) if s == "inf" => Ok(Distance::Infinite),
            Repr::S(s) => Err(serde::de::Error::custom(format!("bad distance {s:?}"))),
        }
    }
}

/// Count of entries where `v` exceeds `u`; infinite when the dims differ.
pub fn d_mixing(u: &MixingMatrix, v: &MixingMatrix) -> Distance {
    if !u.same_dims(v) {
        return Distance::Infinite;
    }
    Distance::Finite(count_deficient(u, v) as u32)
}

pub fn d_depth(u: u32, v: u32) -> Distance {
    Distance::Finite(v.saturating_sub(u))
}

/// Channel indicator plus the summed spatial excess `a_i / b_i - 1`.
///
/// Infinite unless ranks and batch agree and every spatial dim of `b` divides the
/// matching dim of `a` with one common ratio.
pub fn d_shape(a: &TensorShape, b: &TensorShape) -> Distance {
    if a.rank() != b.rank() || a.batch() != b.batch() {
        return Distance::Infinite;
    }
    let mut ratio = None;
    let mut spatial = 0u32;
    for (&x, &y) in a.spatial().iter().zip(b.spatial()) {
        if x < y || x % y != 0 {
            return Distance::Infinite;
        }
        let r = x / y;
        if *ratio.get_or_insert(r) != r {
            return Distance::Infinite;
        }
        spatial = spatial.saturating_add((r - 1) as u32);
    }
    Distance::Finite(u32::from(a.channels() != b.channels()) + spatial)
}

/// Lifts a distance with a weak covering of bound `epsilon` to one with a uniform covering.
pub fn strengthen_distance<X: ?Sized>(d: impl Fn(&X) -> f64, epsilon: f64) -> impl Fn(&X) -> f64 {
    move |x| {
        let v = d(x);
        if v == 0.0 {
            0.0
        } else {
            v + epsilon
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn arithmetic() {
        assert_eq!(
            Distance::Finite(2) + Distance::Finite(3),
            Distance::Finite(5)
        );
        assert_eq!(Distance::Finite(2) + Distance::Infinite, Distance::Infinite);
        assert!(Distance::Finite(u32::MAX) < Distance::Infinite);
        let total: Distance = [1, 2, 3].into_iter().map(Distance::Finite).sum();
        assert_eq!(total, Distance::Finite(6));
        let json = serde_json::to_string(&[Distance::Finite(4), Distance::Infinite]).unwrap();
        assert_eq!(json, "[4,\"inf\"]");
        let back: Vec<Distance> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Distance::Finite(4), Distance::Infinite]);
    }

    #[test]
    fn mixing_examples() {
        let i = MixingMatrix::identity(4);
        let conv = MixingMatrix::parse_rows(&["oxxa", "xmxa", "xxma", "xxxa"]).unwrap();
        let dense = MixingMatrix::parse_rows(&["oxxa", "xoxa", "xxoa", "xxxa"]).unwrap();
        assert_eq!(d_mixing(&conv, &conv), Distance::ZERO);
        assert_eq!(d_mixing(&i, &conv), Distance::Finite(6));
        assert_eq!(d_mixing(&conv, &dense), Distance::ZERO);
        assert_eq!(d_mixing(&i, &MixingMatrix::identity(3)), Distance::Infinite);
    }

    #[test]
    fn depth_examples() {
        assert_eq!(d_depth(3, 4), Distance::Finite(1));
        assert_eq!(d_depth(5, 2), Distance::ZERO);
        assert_eq!(d_depth(0, 0), Distance::ZERO);
    }

    #[test]
    fn shape_examples() {
        let a = shape(&[1, 8, 8, 16]);
        assert_eq!(d_shape(&a, &a), Distance::ZERO);
        assert_eq!(d_shape(&a, &shape(&[1, 4, 4, 16])), Distance::Finite(2));
        assert_eq!(
            d_shape(&shape(&[1, 8, 8, 3]), &shape(&[1, 3, 3, 3])),
            Distance::Infinite
        );
        assert_eq!(d_shape(&a, &shape(&[1, 4, 2, 16])), Distance::Infinite);
        assert_eq!(d_shape(&a, &shape(&[1, 4, 4, 8])), Distance::Finite(3));
        assert_eq!(d_shape(&a, &shape(&[2, 8, 8, 16])), Distance::Infinite);
    }

    #[test]
    fn strengthened() {
        let d = strengthen_distance(|x: &f64| *x, 1.0);
        assert_eq!(d(&0.0), 0.0);
        assert_eq!(d(&0.5), 1.5);
        assert!(d(&0.2) < d(&0.3));
    }
}
