//! Average precision over category relevance and precision curves.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::fusion::{FusionMode, ResultList};
use crate::index::{IndexError, IndexStore, QuerySpec};
use crate::par::Exec;
use crate::vocabulary::BowHistogram;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("result list has {len} entries, need {needed}")]
    ListTooShort { len: usize, needed: usize },
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("list length must be at least 1")]
    ZeroLength,
    #[error("curve depth {kmax} exceeds the {objects} stored objects")]
    DepthTooLarge { kmax: usize, objects: usize },
    #[error("malformed curve CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which denominator divides the summed precisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApNormalization {
    /// The list length `N`.
    #[default]
    ListLength,
    /// `min(N, relevant items in the collection)`: standard average precision.
    RelevantCount(usize),
}

/// `Σ_{k≤N} P(k)·rel(k) / N` over the first `n` relevance flags.
pub fn ave_p_flags(relevant: &[bool], n: usize) -> Result<f64, EvalError> {
    ave_p_flags_with(relevant, n, ApNormalization::ListLength)
}

pub fn ave_p_flags_with(
    relevant: &[bool],
    n: usize,
    norm: ApNormalization,
) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroLength);
    }
    if relevant.len() < n {
        return Err(EvalError::ListTooShort {
            len: relevant.len(),
            needed: n,
        });
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevant[..n].iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let denom = match norm {
        ApNormalization::ListLength => n,
        ApNormalization::RelevantCount(total) => n.min(total),
    };
    Ok(if denom == 0 { 0.0 } else { sum / denom as f64 })
}

/// Average precision of a result list where entries of `category` are relevant.
pub fn ave_p(results: &ResultList, category: &str, n: usize) -> Result<f64, EvalError> {
    let flags: Vec<bool> = results.iter().map(|e| e.category == category).collect();
    ave_p_flags(&flags, n)
}

/// A labelled query: its images already quantized against the store.
#[derive(Debug, Clone)]
pub struct QueryCase {
    pub query_id: String,
    pub category: String,
    pub hists: Vec<BowHistogram>,
}

impl QueryCase {
    /// The images a mode consumes: single mode uses only the first.
    pub fn images_for(&self, mode: FusionMode) -> &[BowHistogram] {
        if mode.is_single() {
            &self.hists[..self.hists.len().min(1)]
        } else {
            &self.hists
        }
    }
}

fn run_queries(
    store: &IndexStore,
    cases: &[QueryCase],
    spec: &QuerySpec,
    depth: usize,
    exec: Exec,
) -> Result<Vec<Vec<bool>>, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let spec = spec.with_k(depth);
    exec.try_map(cases, |c| {
        let r = store.query_hists(c.images_for(spec.mode), &spec, Exec::Sequential)?;
        Ok(r.iter().map(|e| e.category == c.category).collect())
    })
}

/// Mean over queries of the average precision at list length `n`.
pub fn mean_ave_p(
    store: &IndexStore,
    cases: &[QueryCase],
    spec: &QuerySpec,
    n: usize,
    exec: Exec,
) -> Result<f64, EvalError> {
    let flags = run_queries(store, cases, spec, n, exec)?;
    let mut total = 0.0;
    for f in &flags {
        total += ave_p_flags(f, n)?;
    }
    Ok(total / flags.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecisionCurve {
    /// `(k, mean AveP at list length k)` for k = 1..=K_max.
    pub points: Vec<(usize, f64)>,
}

/// One query per case at depth `kmax`; point `k` averages AveP over each
/// list's first `k` entries.
pub fn precision_curve(
    store: &IndexStore,
    cases: &[QueryCase],
    spec: &QuerySpec,
    kmax: usize,
    exec: Exec,
) -> Result<PrecisionCurve, EvalError> {
    if kmax == 0 {
        return Err(EvalError::ZeroLength);
    }
    if kmax > store.objects().len() {
        return Err(EvalError::DepthTooLarge {
            kmax,
            objects: store.objects().len(),
        });
    }
    let flags = run_queries(store, cases, spec, kmax, exec)?;
    let mut points = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut total = 0.0;
        for f in &flags {
            total += ave_p_flags(f, k)?;
        }
        points.push((k, total / flags.len() as f64));
    }
    Ok(PrecisionCurve { points })
}

impl PrecisionCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,avep\n");
        for (k, v) in &self.points {
            let _ = writeln!(out, "{k},{v:.6}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "k,avep")) => {}
            _ => {
                return Err(EvalError::Csv {
                    line: 1,
                    message: "expected header k,avep".into(),
                })
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| EvalError::Csv {
                line: i + 1,
                message: message.to_string(),
            };
            let (k, v) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            let k = k.parse().map_err(|_| bad("bad k"))?;
            let v = v.parse().map_err(|_| bad("bad avep"))?;
            points.push((k, v));
        }
        Ok(Self { points })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// File name of the curve for one (similarity, fusion) cell.
pub fn curve_file_name(similarity: &str, fusion: &str) -> String {
    format!("curve_{similarity}_{fusion}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_formula_examples() {
        assert_eq!(ave_p_flags(&[true; 5], 5).unwrap(), 1.0);
        assert_eq!(ave_p_flags(&[false; 5], 5).unwrap(), 0.0);
        let flags = [true, false, true, false, false];
        assert!((ave_p_flags(&flags, 5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            ave_p_flags(&flags, 6),
            Err(EvalError::ListTooShort { len: 5, needed: 6 })
        ));
    }

    #[test]
    fn standard_variant() {
        let flags = [true, false, true, false, false];
        let ap = ave_p_flags_with(&flags, 5, ApNormalization::RelevantCount(2)).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let none = ave_p_flags_with(&flags, 5, ApNormalization::RelevantCount(0)).unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn csv_roundtrip() {
        let c = PrecisionCurve {
            points: vec![(1, 1.0), (2, 0.75), (3, 0.5555556)],
        };
        let text = c.to_csv();
        assert_eq!(text, "k,avep\n1,1.000000\n2,0.750000\n3,0.555556\n");
        let back = PrecisionCurve::from_csv(&text).unwrap();
        assert_eq!(back.points[..2], c.points[..2]);
        assert!((back.points[2].1 - 0.555556).abs() < 1e-12);
        assert!(PrecisionCurve::from_csv("x,y\n").is_err());
        assert!(PrecisionCurve::from_csv("k,avep\n1;2\n").is_err());
        assert_eq!(curve_file_name("nhi", "set_max"), "curve_nhi_set_max.csv");
    }
}
