//! Slow, direct evaluations used as test oracles.

use std::cmp::Ordering;

/// Table-style similarity by name: `dot`, `hi`, `nhi`, `nc`, `minmax`.
pub fn similarity(kind: &str, q: &[f64], d: &[f64]) -> f64 {
    assert_eq!(q.len(), d.len());
    let sq: f64 = q.iter().sum();
    let sd: f64 = d.iter().sum();
    if sq == 0.0 || sd == 0.0 {
        return 0.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    match kind {
        "dot" => {
            for i in 0..q.len() {
                num += q[i] * d[i];
            }
            num
        }
        "hi" => {
            for i in 0..q.len() {
                num += q[i].min(d[i]);
            }
            num / sq.min(sd)
        }
        "nhi" => {
            for i in 0..q.len() {
                num += (q[i] / sq).min(d[i] / sd);
            }
            num
        }
        "nc" => {
            let mut qq = 0.0;
            let mut dd = 0.0;
            for i in 0..q.len() {
                num += q[i] * d[i];
                qq += q[i] * q[i];
                dd += d[i] * d[i];
            }
            num / (qq * dd).sqrt()
        }
        "minmax" => {
            for i in 0..q.len() {
                num += q[i].min(d[i]);
                den += q[i].max(d[i]);
            }
            num / den
        }
        other => panic!("unknown similarity {other}"),
    }
}

/// Image-set similarity of an `m × n` matrix given as rows.
pub fn set_score(kind: &str, s: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = s.iter().flatten().copied().collect();
    let maxima: Vec<f64> = s
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let weighted = |v: &[f64]| {
        let total: f64 = v.iter().sum();
        if total == 0.0 {
            0.0
        } else {
            v.iter().map(|x| x * x).sum::<f64>() / total
        }
    };
    match kind {
        "set_max" => all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "set_average" => all.iter().sum::<f64>() / all.len() as f64,
        "set_weighted_average" => weighted(&all),
        "set_average_max" => maxima.iter().sum::<f64>() / maxima.len() as f64,
        "set_weighted_average_max" => weighted(&maxima),
        other => panic!("unknown set fusion {other}"),
    }
}

/// Rank of every entry: one plus the number of strictly higher scores.
pub fn ranks(list: &[f64]) -> Vec<usize> {
    list.iter()
        .map(|&s| 1 + list.iter().filter(|&&o| o > s).count())
        .collect()
}

/// Indices sorted best first under `key_cmp`, remaining ties by id.
fn order_by(ids: &[String], key_cmp: impl Fn(usize, usize) -> Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| key_cmp(a, b).then_with(|| ids[a].cmp(&ids[b])));
    idx
}

/// Plain ranking of one score list: descending score, ties by id.
pub fn single_order(ids: &[String], scores: &[f64]) -> Vec<usize> {
    order_by(ids, |a, b| scores[b].partial_cmp(&scores[a]).unwrap())
}

/// Full fused ordering of an image universe for the image-level kinds.
/// `count` orders by count, then rank sum, then id.
pub fn image_fusion_order(kind: &str, ids: &[String], lists: &[Vec<f64>], depth: usize) -> Vec<usize> {
    let u = ids.len();
    let r: Vec<Vec<usize>> = lists.iter().map(|l| ranks(l)).collect();
    let col = |d: usize| -> Vec<f64> { lists.iter().map(|l| l[d]).collect() };
    let rank_sum = |d: usize| -> usize { r.iter().map(|x| x[d]).sum() };
    match kind {
        "max_sim" => {
            let s: Vec<f64> = (0..u)
                .map(|d| col(d).into_iter().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            single_order(ids, &s)
        }
        "weighted_sim" => {
            let s: Vec<f64> = (0..u)
                .map(|d| {
                    let c = col(d);
                    let t: f64 = c.iter().sum();
                    if t == 0.0 {
                        0.0
                    } else {
                        c.iter().map(|x| x * x).sum::<f64>() / t
                    }
                })
                .collect();
            single_order(ids, &s)
        }
        "count" => {
            let count = |d: usize| r.iter().filter(|x| x[d] <= depth).count();
            order_by(ids, |a, b| {
                count(b).cmp(&count(a)).then(rank_sum(a).cmp(&rank_sum(b)))
            })
        }
        "highest_rank" => {
            let best = |d: usize| r.iter().map(|x| x[d]).min().unwrap();
            order_by(ids, |a, b| best(a).cmp(&best(b)))
        }
        "rank_sum" => order_by(ids, |a, b| rank_sum(a).cmp(&rank_sum(b))),
        other => panic!("unknown image fusion {other}"),
    }
}

/// Average precision as printed: Σ_{k≤n} P(k)·rel(k) / n.
pub fn ave_p(relevant: &[bool], n: usize) -> f64 {
    let mut sum = 0.0;
    for k in 1..=n {
        if relevant[k - 1] {
            let hits = relevant[..k].iter().filter(|&&r| r).count();
            sum += hits as f64 / k as f64;
        }
    }
    sum / n as f64
}
