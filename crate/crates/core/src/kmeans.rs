//! Lloyd's k-means with k-means++ seeding over row-major f32 points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub seed: u64,
    /// Stop once the relative distortion improvement of an iteration falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Training descriptors are subsampled uniformly to at most this many per channel.
    pub max_samples: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-4,
            max_iters: 100,
            max_samples: 500_000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("need at least {needed} points, got {available}")]
    TooFewPoints { needed: usize, available: usize },
    #[error("only {distinct} distinct points for k = {k}")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Number of Lloyd updates performed.
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroids.
    pub distortion: f64,
    /// Distortion after seeding and after every update; non-increasing.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(point: &[f32], centroid: &[f64]) -> f64 {
    point
        .iter()
        .zip(centroid)
        .map(|(&p, &c)| {
            let d = p as f64 - c;
            d * d
        })
        .sum()
}

/// Index and squared distance of the closest centroid; ties go to the lowest index.
fn nearest(point: &[f32], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn kmeans(
    data: &[f32],
    dim: usize,
    k: usize,
    cfg: &KMeansConfig,
    exec: Exec,
) -> Result<KMeansResult, KMeansError> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(KMeansError::Invalid(format!(
            "{} values do not form rows of dimension {dim}",
            data.len()
        )));
    }
    if k == 0 {
        return Err(KMeansError::Invalid("k must be at least 1".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(KMeansError::Invalid("non-finite coordinate".into()));
    }
    let n = data.len() / dim;
    if n < k {
        return Err(KMeansError::TooFewPoints {
            needed: k,
            available: n,
        });
    }
    let points: Vec<&[f32]> = data.chunks_exact(dim).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = seed_plus_plus(&points, dim, k, &mut rng, exec)?;

    let assign = |centroids: &[f64]| exec.map(&points, |p| nearest(p, centroids, dim));
    let mut assigned = assign(&centroids);
    let mut distortion: f64 = assigned.iter().map(|a| a.1).sum();
    let mut history = vec![distortion];
    let mut iterations = 0;

    while iterations < cfg.max_iters && distortion > 0.0 {
        update_centroids(&points, dim, &assigned, &mut centroids);
        assigned = assign(&centroids);
        let next: f64 = assigned.iter().map(|a| a.1).sum();
        iterations += 1;
        history.push(next);
        let improvement = (distortion - next) / distortion;
        distortion = next;
        if improvement < cfg.tol {
            break;
        }
    }

    Ok(KMeansResult {
        dim,
        centroids,
        assignments: assigned.iter().map(|a| a.0).collect(),
        iterations,
        distortion,
        history,
    })
}

fn seed_plus_plus(
    points: &[&[f32]],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    exec: Exec,
) -> Result<Vec<f64>, KMeansError> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend(points[first].iter().map(|&v| v as f64));
    let mut d2: Vec<f64> = exec.map(points, |p| sq_dist(p, &centroids[..dim]));

    for chosen in 1..k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(KMeansError::TooFewDistinct { k, distinct: chosen });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a positive entry");
        let start = centroids.len();
        centroids.extend(points[pick].iter().map(|&v| v as f64));
        let new_c = &centroids[start..];
        let updated: Vec<f64> = exec.map_range(n, |i| d2[i].min(sq_dist(points[i], new_c)));
        d2 = updated;
    }
    Ok(centroids)
}

/// Replaces each centroid by the mean of its points. Empty clusters are
/// moved onto the point currently farthest from its centroid.
fn update_centroids(points: &[&[f32]], dim: usize, assigned: &[(usize, f64)], centroids: &mut [f64]) {
    let k = centroids.len() / dim;
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &(c, _)) in points.iter().zip(assigned) {
        counts[c] += 1;
        for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p.iter()) {
            *s += v as f64;
        }
    }

    let mut taken = vec![false; points.len()];
    for c in 0..k {
        let row = &mut centroids[c * dim..(c + 1) * dim];
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (r, s) in row.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *r = s / inv;
            }
            continue;
        }
        let far = assigned
            .iter()
            .enumerate()
            .filter(|(i, a)| !taken[*i] && a.1 > 0.0)
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        if let Some(i) = far {
            taken[i] = true;
            for (r, &v) in row.iter_mut().zip(points[i].iter()) {
                *r = v as f64;
            }
        }
    }
}
