use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Locality of a paired input dimension, ordered X < O < M < A.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Loc {
    /// not paired
    X,
    /// one-to-one
    O,
    /// many-to-one
    M,
    /// all-to-one
    A,
}

impl Loc {
    pub const ALL: [Loc; 4] = [Loc::X, Loc::O, Loc::M, Loc::A];

    pub fn glyph(self) -> char {
        match self {
            Loc::X => '×',
            Loc::O => '○',
            Loc::M => '◑',
            Loc::A => '●',
        }
    }

    pub fn letter(self) -> char {
        match self {
            Loc::X => 'x',
            Loc::O => 'o',
            Loc::M => 'm',
            Loc::A => 'a',
        }
    }

    pub fn from_char(c: char) -> Option<Loc> {
        match c {
            'x' | 'X' | '×' => Some(Loc::X),
            'o' | 'O' | '○' => Some(Loc::O),
            'm' | 'M' | '◑' => Some(Loc::M),
            'a' | 'A' | '●' => Some(Loc::A),
            _ => None,
        }
    }
}

/// Semiring addition: max.
pub fn loc_add(y: Loc, z: Loc) -> Loc {
    y.max(z)
}

/// Semiring multiplication (composition of localities).
pub fn loc_mul(y: Loc, z: Loc) -> Loc {
    match (y, z) {
        (Loc::X, _) | (_, Loc::X) => Loc::X,
        (Loc::O, other) | (other, Loc::O) => other,
        (Loc::A, _) | (_, Loc::A) => Loc::A,
        (Loc::M, Loc::M) => Loc::M,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MixingError {
    #[error("cannot compose {0}x{1} with {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("unknown locality glyph {0:?}")]
    Glyph(char),
    #[error("ragged mixing matrix")]
    Ragged,
}

/// Rows are output dims, columns input dims.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MixingMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Loc>,
}

impl MixingMatrix {
    pub fn filled(rows: usize, cols: usize, value: Loc) -> Self {
        Self {
            rows,
            cols,
            entries: vec![value; rows * cols],
        }
    }

    pub fn none(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Loc::X)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::none(n, n);
        for i in 0..n {
            m.set(i, i, Loc::O);
        }
        m
    }

    /// Square matrix from a diagonal.
    pub fn diagonal(diag: &[Loc]) -> Self {
        let n = diag.len();
        let mut m = Self::none(n, n);
        for (i, &l) in diag.iter().enumerate() {
            m.set(i, i, l);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Loc>>) -> Result<Self, MixingError> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MixingError::Ragged);
        }
        Ok(Self {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Parses rows such as `["oxxa", "xmxa", ...]`; whitespace is ignored.
    pub fn parse_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, MixingError> {
        let parsed = rows
            .iter()
            .map(|row| {
                row.as_ref()
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| Loc::from_char(c).ok_or(MixingError::Glyph(c)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(parsed)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Loc {
        self.entries[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Loc) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn entries(&self) -> &[Loc] {
        &self.entries
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Entrywise order; false when dims differ.
    pub fn le(&self, other: &Self) -> bool {
        self.same_dims(other) && self.entries.iter().zip(&other.entries).all(|(a, b)| a <= b)
    }

    /// Entrywise loc_add.
    pub fn join(&self, other: &Self) -> Result<Self, MixingError> {
        if !self.same_dims(other) {
            return Err(MixingError::DimMismatch(
                self.rows, self.cols, other.rows, other.cols,
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| loc_add(a, b))
                .collect(),
        })
    }

    /// Count of entries equal to the given locality.
    pub fn count(&self, value: Loc) -> usize {
        self.entries.iter().filter(|&&l| l == value).count()
    }

    pub fn rows_as_strings(&self) -> Vec<String> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c).letter()).collect())
            .collect()
    }

    /// Glyph table with axis labels, rows = outputs.
    pub fn render(&self, labels: &[String]) -> String {
        let label = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut s = String::from("out\\in");
        for c in 0..self.cols {
            s.push_str(&format!(" {:>2}", label(c)));
        }
        s.push('\n');
        for r in 0..self.rows {
            s.push_str(&format!("{:>6}", label(r)));
            for c in 0..self.cols {
                s.push_str(&format!("  {}", self.get(r, c).glyph()));
            }
            s.push('\n');
        }
        s
    }
}

/// Semiring matrix product `Q × U`.
pub fn mix_compose(q: &MixingMatrix, u: &MixingMatrix) -> Result<MixingMatrix, MixingError> {
    if q.cols != u.rows {
        return Err(MixingError::DimMismatch(q.rows, q.cols, u.rows, u.cols));
    }
    let mut out = MixingMatrix::none(q.rows, u.cols);
    for i in 0..q.rows {
        for j in 0..u.cols {
            let mut acc = Loc::X;
            for y in 0..q.cols {
                acc = loc_add(acc, loc_mul(q.get(i, y), u.get(y, j)));
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Number of entries where `v` exceeds `u` (dims assumed equal).
pub fn count_deficient(u: &MixingMatrix, v: &MixingMatrix) -> usize {
    u.entries
        .iter()
        .zip(&v.entries)
        .filter(|(a, b)| b > a)
        .count()
}

impl fmt::Display for MixingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rows_as_strings().join("/"))
    }
}

impl Serialize for MixingMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rows_as_strings().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MixingMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(deserializer)?;
        MixingMatrix::parse_rows(&rows).map_err(serde::de::Error::custom)
    }
}
