//! Histogram similarity functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Histogram bin value; raw counts are `u32`, normalized views use `f64`.
pub trait Bin: Copy {
    fn to_f64(self) -> f64;
}

impl Bin for u32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Bin for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl Bin for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    /// Raw dot product; unbounded.
    Dot,
    /// Histogram intersection normalized by the smaller L1 mass.
    Hi,
    /// Intersection of L1-normalized histograms.
    Nhi,
    /// Normalized correlation (cosine).
    Nc,
    /// Sum of minima over sum of maxima.
    MinMax,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 5] = [
        SimilarityKind::Dot,
        SimilarityKind::Hi,
        SimilarityKind::Nhi,
        SimilarityKind::Nc,
        SimilarityKind::MinMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::Dot => "dot",
            SimilarityKind::Hi => "hi",
            SimilarityKind::Nhi => "nhi",
            SimilarityKind::Nc => "nc",
            SimilarityKind::MinMax => "minmax",
        }
    }

    /// Whether scores are confined to `[0, 1]`.
    pub fn is_bounded(self) -> bool {
        self != SimilarityKind::Dot
    }

    pub fn score<A: Bin, B: Bin>(self, q: &[A], d: &[B]) -> f64 {
        similarity(self, q, d)
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownName {
    pub what: &'static str,
    pub given: String,
    pub valid: Vec<&'static str>,
}

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown {} '{}' (valid: {})",
            self.what,
            self.given,
            self.valid.join(", ")
        )
    }
}

impl std::error::Error for UnknownName {}

impl FromStr for SimilarityKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownName {
                what: "similarity",
                given: s.to_string(),
                valid: Self::ALL.iter().map(|k| k.name()).collect(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("histogram lengths differ: {left} vs {right}")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// Scores two equal-length histograms. A histogram with no mass scores 0
/// against anything.
///
/// # Panics
/// If the lengths differ; see [`try_similarity`].
pub fn similarity<A: Bin, B: Bin>(kind: SimilarityKind, q: &[A], d: &[B]) -> f64 {
    match try_similarity(kind, q, d) {
        Ok(s) => s,
        Err(e) => panic!("{e}"),
    }
}

pub fn try_similarity<A: Bin, B: Bin>(
    kind: SimilarityKind,
    q: &[A],
    d: &[B],
) -> Result<f64, LengthMismatch> {
    if q.len() != d.len() {
        return Err(LengthMismatch {
            left: q.len(),
            right: d.len(),
        });
    }
    let pairs = || q.iter().zip(d).map(|(&a, &b)| (a.to_f64(), b.to_f64()));
    let lq: f64 = q.iter().map(|v| v.to_f64()).sum();
    let ld: f64 = d.iter().map(|v| v.to_f64()).sum();
    if lq <= 0.0 || ld <= 0.0 {
        return Ok(0.0);
    }
    let s = match kind {
        SimilarityKind::Dot => return Ok(pairs().map(|(a, b)| a * b).sum()),
        SimilarityKind::Hi => pairs().map(|(a, b)| a.min(b)).sum::<f64>() / lq.min(ld),
        SimilarityKind::Nhi => pairs().map(|(a, b)| (a / lq).min(b / ld)).sum(),
        SimilarityKind::Nc => {
            let (mut dot, mut qq, mut dd) = (0.0, 0.0, 0.0);
            for (a, b) in pairs() {
                dot += a * b;
                qq += a * a;
                dd += b * b;
            }
            dot / (qq.sqrt() * dd.sqrt())
        }
        SimilarityKind::MinMax => {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (a, b) in pairs() {
                lo += a.min(b);
                hi += a.max(b);
            }
            lo / hi
        }
    };
    Ok(s.clamp(0.0, 1.0))
}
