//! Early fusion of query histograms, image-set similarity over score
//! matrices, rank aggregation over per-image result lists, and the ranked
//! result list they all produce.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{Bin, UnknownName};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no inputs to fuse")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("inconsistent universe: {0}")]
    InconsistentUniverse(String),
    #[error("invalid score matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyFusionKind {
    Sum,
    Average,
    Maximum,
}

impl EarlyFusionKind {
    pub const ALL: [EarlyFusionKind; 3] = [
        EarlyFusionKind::Sum,
        EarlyFusionKind::Average,
        EarlyFusionKind::Maximum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EarlyFusionKind::Sum => "sum",
            EarlyFusionKind::Average => "average",
            EarlyFusionKind::Maximum => "maximum",
        }
    }
}

/// Streaming early fusion: histograms are folded in one at a time.
/// Average is kept as a running sum and divided once in [`finish`](Self::finish).
#[derive(Debug, Clone)]
pub struct RunningFusion {
    kind: EarlyFusionKind,
    acc: Vec<f64>,
    count: usize,
}

impl RunningFusion {
    pub fn new(kind: EarlyFusionKind) -> Self {
        Self {
            kind,
            acc: Vec::new(),
            count: 0,
        }
    }

    pub fn kind(&self) -> EarlyFusionKind {
        self.kind
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push<B: Bin>(&mut self, hist: &[B]) -> Result<(), FusionError> {
        if self.count == 0 {
            self.acc = hist.iter().map(|v| v.to_f64()).collect();
        } else {
            if hist.len() != self.acc.len() {
                return Err(FusionError::LengthMismatch {
                    expected: self.acc.len(),
                    found: hist.len(),
                });
            }
            match self.kind {
                EarlyFusionKind::Sum | EarlyFusionKind::Average => {
                    for (a, v) in self.acc.iter_mut().zip(hist) {
                        *a += v.to_f64();
                    }
                }
                EarlyFusionKind::Maximum => {
                    for (a, v) in self.acc.iter_mut().zip(hist) {
                        *a = a.max(v.to_f64());
                    }
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// The combined histogram of everything pushed so far.
    pub fn current(&self) -> Result<Vec<f64>, FusionError> {
        if self.count == 0 {
            return Err(FusionError::EmptyInput);
        }
        Ok(match self.kind {
            EarlyFusionKind::Average => {
                let m = self.count as f64;
                self.acc.iter().map(|v| v / m).collect()
            }
            _ => self.acc.clone(),
        })
    }

    pub fn finish(self) -> Result<Vec<f64>, FusionError> {
        self.current()
    }
}

pub fn early_fuse<B: Bin>(hists: &[&[B]], kind: EarlyFusionKind) -> Result<Vec<f64>, FusionError> {
    let mut run = RunningFusion::new(kind);
    for h in hists {
        run.push(h)?;
    }
    run.finish()
}

/// `m × n` pairwise similarities between query images (rows) and the views
/// of one database object (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    m: usize,
    n: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(m: usize, n: usize, scores: Vec<f64>) -> Result<Self, FusionError> {
        if m == 0 || n == 0 {
            return Err(FusionError::InvalidMatrix(format!("shape {m}x{n}")));
        }
        if scores.len() != m * n {
            return Err(FusionError::InvalidMatrix(format!(
                "{} scores for shape {m}x{n}",
                scores.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(FusionError::InvalidMatrix(format!("score {s}")));
        }
        Ok(Self { m, n, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FusionError> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(FusionError::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n..(i + 1) * self.n]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Self-weighted mean `Σ s²/Σs`, 0 when the total is 0. Values are
/// accumulated in sorted order so the result does not depend on input
/// order, and a single positive value is returned unchanged.
fn self_weighted(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.filter(|&s| s > 0.0).collect();
    match v.len() {
        0 => 0.0,
        1 => v[0],
        _ => {
            v.sort_by(f64::total_cmp);
            let total: f64 = v.iter().sum();
            v.iter().map(|s| s * s).sum::<f64>() / total
        }
    }
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetFusion {
    Max,
    Average,
    WeightedAverage,
    AverageMax,
    WeightedAverageMax,
}

impl SetFusion {
    pub const ALL: [SetFusion; 5] = [
        SetFusion::Max,
        SetFusion::Average,
        SetFusion::WeightedAverage,
        SetFusion::AverageMax,
        SetFusion::WeightedAverageMax,
    ];

    pub fn score(self, sm: &ScoreMatrix) -> f64 {
        let all = sm.scores.iter().copied();
        match self {
            SetFusion::Max => all.fold(f64::NEG_INFINITY, f64::max),
            SetFusion::Average => all.sum::<f64>() / sm.scores.len() as f64,
            SetFusion::WeightedAverage => self_weighted(all),
            SetFusion::AverageMax => {
                (0..sm.m).map(|i| row_max(sm.row(i))).sum::<f64>() / sm.m as f64
            }
            SetFusion::WeightedAverageMax => {
                let maxima: Vec<f64> = (0..sm.m).map(|i| row_max(sm.row(i))).collect();
                self_weighted(maxima.iter().copied())
            }
        }
    }
}

pub fn set_similarity(sm: &ScoreMatrix, kind: SetFusion) -> f64 {
    kind.score(sm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImageFusion {
    MaxSim,
    WeightedSim,
    Count,
    HighestRank,
    RankSum,
}

impl ImageFusion {
    pub const ALL: [ImageFusion; 5] = [
        ImageFusion::MaxSim,
        ImageFusion::WeightedSim,
        ImageFusion::Count,
        ImageFusion::HighestRank,
        ImageFusion::RankSum,
    ];
}

/// Competition ranks (1 = best) of one score list: an entry's rank is one
/// plus the number of strictly higher scores, so equal scores share a rank.
pub fn competition_ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && scores[order[pos - 1]] == scores[i] {
            ranks[order[pos - 1]]
        } else {
            pos + 1
        };
    }
    ranks
}

/// Fuses `m` dense score lists over the same image universe into one score
/// per image; higher is better for every kind.
///
/// Rank-keyed kinds return `-key`. `count` returns the number of lists that
/// hold the image within their top `list_depth` ranks, plus a fraction in
/// `(0, 1)` that decreases with the image's rank sum, so equal counts are
/// ordered by rank sum.
pub fn fuse_image_scores(
    lists: &[Vec<f64>],
    kind: ImageFusion,
    list_depth: usize,
) -> Result<Vec<f64>, FusionError> {
    let Some(first) = lists.first() else {
        return Err(FusionError::EmptyInput);
    };
    let u = first.len();
    if let Some(l) = lists.iter().find(|l| l.len() != u) {
        return Err(FusionError::InconsistentUniverse(format!(
            "list of {} images, expected {u}",
            l.len()
        )));
    }
    let m = lists.len();
    let out = match kind {
        ImageFusion::MaxSim => (0..u)
            .map(|d| lists.iter().map(|l| l[d]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        ImageFusion::WeightedSim => (0..u)
            .map(|d| self_weighted(lists.iter().map(|l| l[d])))
            .collect(),
        ImageFusion::Count | ImageFusion::HighestRank | ImageFusion::RankSum => {
            let ranks: Vec<Vec<usize>> = lists.iter().map(|l| competition_ranks(l)).collect();
            let span = (m * u + 1) as f64;
            (0..u)
                .map(|d| {
                    let per = ranks.iter().map(|r| r[d]);
                    match kind {
                        ImageFusion::HighestRank => -(per.min().unwrap_or(0) as f64),
                        ImageFusion::RankSum => -(per.sum::<usize>() as f64),
                        _ => {
                            let count = per.clone().filter(|&r| r <= list_depth).count();
                            let sum: usize = per.sum();
                            count as f64 + (1.0 - sum as f64 / span)
                        }
                    }
                })
                .collect()
        }
    };
    Ok(out)
}

/// Rank aggregation over `m` lists of `(image_id, score)`; every list must
/// cover the same set of ids.
pub fn fuse_image_rankings(
    lists: &[Vec<(String, f64)>],
    kind: ImageFusion,
    list_depth: usize,
    k: usize,
) -> Result<ResultList, FusionError> {
    let Some(first) = lists.first() else {
        return Err(FusionError::EmptyInput);
    };
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(first.len());
    for (i, (id, _)) in first.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(FusionError::InconsistentUniverse(format!("duplicate id {id}")));
        }
    }
    let mut dense = Vec::with_capacity(lists.len());
    for list in lists {
        if list.len() != first.len() {
            return Err(FusionError::InconsistentUniverse(format!(
                "list of {} images, expected {}",
                list.len(),
                first.len()
            )));
        }
        let mut scores = vec![f64::NAN; first.len()];
        for (id, s) in list {
            let slot = index
                .get(id.as_str())
                .map(|&i| &mut scores[i])
                .ok_or_else(|| FusionError::InconsistentUniverse(format!("unknown id {id}")))?;
            if !slot.is_nan() {
                return Err(FusionError::InconsistentUniverse(format!("duplicate id {id}")));
            }
            *slot = *s;
        }
        dense.push(scores);
    }
    let fused = fuse_image_scores(&dense, kind, list_depth)?;
    let entries = first
        .iter()
        .zip(fused)
        .map(|((id, _), score)| ResultEntry {
            object_id: id.clone(),
            category: String::new(),
            score,
        })
        .collect();
    Ok(ResultList::ranked(entries, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LateFusionKind {
    Image(ImageFusion),
    Set(SetFusion),
}

impl LateFusionKind {
    pub const ALL: [LateFusionKind; 10] = [
        LateFusionKind::Image(ImageFusion::MaxSim),
        LateFusionKind::Image(ImageFusion::WeightedSim),
        LateFusionKind::Image(ImageFusion::Count),
        LateFusionKind::Image(ImageFusion::HighestRank),
        LateFusionKind::Image(ImageFusion::RankSum),
        LateFusionKind::Set(SetFusion::Max),
        LateFusionKind::Set(SetFusion::Average),
        LateFusionKind::Set(SetFusion::WeightedAverage),
        LateFusionKind::Set(SetFusion::AverageMax),
        LateFusionKind::Set(SetFusion::WeightedAverageMax),
    ];

    pub fn name(self) -> &'static str {
        match self {
            LateFusionKind::Image(ImageFusion::MaxSim) => "max_sim",
            LateFusionKind::Image(ImageFusion::WeightedSim) => "weighted_sim",
            LateFusionKind::Image(ImageFusion::Count) => "count",
            LateFusionKind::Image(ImageFusion::HighestRank) => "highest_rank",
            LateFusionKind::Image(ImageFusion::RankSum) => "rank_sum",
            LateFusionKind::Set(SetFusion::Max) => "set_max",
            LateFusionKind::Set(SetFusion::Average) => "set_average",
            LateFusionKind::Set(SetFusion::WeightedAverage) => "set_weighted_average",
            LateFusionKind::Set(SetFusion::AverageMax) => "set_average_max",
            LateFusionKind::Set(SetFusion::WeightedAverageMax) => "set_weighted_average_max",
        }
    }
}

/// How a query with one or more images is matched against the database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// One query image; objects score by their best view.
    None,
    Early(EarlyFusionKind),
    Late(LateFusionKind),
}

impl FusionMode {
    /// `none` followed by the 13 fusion kinds.
    pub fn all() -> Vec<FusionMode> {
        std::iter::once(FusionMode::None)
            .chain(EarlyFusionKind::ALL.map(FusionMode::Early))
            .chain(LateFusionKind::ALL.map(FusionMode::Late))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Early(k) => k.name(),
            FusionMode::Late(k) => k.name(),
        }
    }

    pub fn is_single(self) -> bool {
        self == FusionMode::None
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = Self::all();
        all.iter().copied().find(|m| m.name() == s).ok_or_else(|| UnknownName {
            what: "fusion",
            given: s.to_string(),
            valid: all.iter().map(|m| m.name()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub object_id: String,
    pub category: String,
    pub score: f64,
}

/// Best-first results: descending score, equal scores by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultList {
    entries: Vec<ResultEntry>,
}

pub fn result_order(a: &ResultEntry, b: &ResultEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.object_id.cmp(&b.object_id))
}

impl ResultList {
    /// Sorts candidates into result order and keeps the first `k`.
    pub fn ranked(mut entries: Vec<ResultEntry>, k: usize) -> Self {
        entries.sort_by(result_order);
        entries.truncate(k);
        Self { entries }
    }

    pub fn entries(&self) -> &[ResultEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ResultEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.object_id.as_str()).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ResultEntry> {
        self.entries.iter()
    }
}

impl<'a> IntoIterator for &'a ResultList {
    type Item = &'a ResultEntry;
    type IntoIter = std::slice::Iter<'a, ResultEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn early_examples() {
        let a = [1u32, 2];
        let b = [3u32, 0];
        let hs: [&[u32]; 2] = [&a, &b];
        assert_eq!(early_fuse(&hs, EarlyFusionKind::Sum).unwrap(), vec![4.0, 2.0]);
        assert_eq!(early_fuse(&hs, EarlyFusionKind::Average).unwrap(), vec![2.0, 1.0]);
        assert_eq!(early_fuse(&hs, EarlyFusionKind::Maximum).unwrap(), vec![3.0, 2.0]);
        for k in EarlyFusionKind::ALL {
            assert_eq!(early_fuse(&[&a[..]], k).unwrap(), vec![1.0, 2.0]);
            assert_eq!(early_fuse::<u32>(&[&[0, 0], &[0, 0]], k).unwrap(), vec![0.0, 0.0]);
        }
        assert_eq!(
            early_fuse::<u32>(&[], EarlyFusionKind::Sum),
            Err(FusionError::EmptyInput)
        );
        assert!(matches!(
            early_fuse::<u32>(&[&[1], &[1, 2]], EarlyFusionKind::Sum),
            Err(FusionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn set_examples() {
        let sm = ScoreMatrix::from_rows(&[vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        assert!(close(SetFusion::Max.score(&sm), 0.8));
        assert!(close(SetFusion::Average.score(&sm), 0.5));
        assert!(close(SetFusion::WeightedAverage.score(&sm), 0.6));
        assert!(close(SetFusion::AverageMax.score(&sm), 0.7));
        assert!(close(SetFusion::WeightedAverageMax.score(&sm), 1.0 / 1.4));
        for kind in SetFusion::ALL {
            let one = ScoreMatrix::new(1, 1, vec![0.37]).unwrap();
            assert_eq!(kind.score(&one), 0.37);
            let flat = ScoreMatrix::new(2, 3, vec![0.25; 6]).unwrap();
            assert!(close(kind.score(&flat), 0.25));
            let zero = ScoreMatrix::new(2, 2, vec![0.0; 4]).unwrap();
            assert_eq!(kind.score(&zero), 0.0);
        }
        assert!(ScoreMatrix::new(0, 1, vec![]).is_err());
        assert!(ScoreMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(ScoreMatrix::new(1, 2, vec![1.0]).is_err());
    }

    fn two_lists() -> Vec<Vec<(String, f64)>> {
        let l = |a: f64, b: f64, c: f64| {
            vec![("A".to_string(), a), ("B".to_string(), b), ("C".to_string(), c)]
        };
        vec![l(0.9, 0.5, 0.1), l(0.5, 0.9, 0.1)]
    }

    #[test]
    fn rank_examples() {
        let lists = two_lists();
        for kind in [ImageFusion::RankSum, ImageFusion::HighestRank, ImageFusion::Count] {
            let r = fuse_image_rankings(&lists, kind, 2, 10).unwrap();
            assert_eq!(r.ids(), ["A", "B", "C"], "{kind:?}");
        }
        let r = fuse_image_rankings(&lists, ImageFusion::RankSum, 2, 10).unwrap();
        assert_eq!(r.entries()[0].score, -3.0);
        assert_eq!(r.entries()[2].score, -6.0);
        let r = fuse_image_rankings(&lists, ImageFusion::Count, 2, 10).unwrap();
        assert_eq!(r.entries()[0].score.floor(), 2.0);
        assert_eq!(r.entries()[2].score.floor(), 0.0);
        let r = fuse_image_rankings(&lists[..1], ImageFusion::Count, 1, 2).unwrap();
        assert_eq!(r.ids(), ["A", "B"]);
    }

    #[test]
    fn universe_checks() {
        let mut lists = two_lists();
        lists[1][2].0 = "D".into();
        assert!(matches!(
            fuse_image_rankings(&lists, ImageFusion::MaxSim, 2, 3),
            Err(FusionError::InconsistentUniverse(_))
        ));
        lists[1].pop();
        assert!(fuse_image_rankings(&lists, ImageFusion::MaxSim, 2, 3).is_err());
        assert_eq!(
            fuse_image_rankings(&[], ImageFusion::MaxSim, 2, 3).unwrap_err(),
            FusionError::EmptyInput
        );
    }

    #[test]
    fn competition_ranking() {
        assert_eq!(competition_ranks(&[0.5, 0.9, 0.5, 0.0, 0.0]), vec![2, 1, 2, 4, 4]);
    }

    #[test]
    fn mode_names() {
        let all = FusionMode::all();
        assert_eq!(all.len(), 14);
        for m in &all {
            assert_eq!(m.name().parse::<FusionMode>().unwrap(), *m);
        }
        let err = "median".parse::<FusionMode>().unwrap_err().to_string();
        assert!(err.contains("set_weighted_average_max") && err.contains("rank_sum"));
    }
}
