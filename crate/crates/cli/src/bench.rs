//! Matching-time measurements: quantization, histogram construction,
//! similarity, fusion and ranking for one query, per fusion mode.

use std::fmt::Write as _;
use std::time::Instant;

use mvsearch_core::features::DescriptorSet;
use mvsearch_core::fusion::FusionMode;
use mvsearch_core::index::{IndexStore, QuerySpec};
use mvsearch_core::similarity::SimilarityKind;
use mvsearch_core::Exec;

use crate::commands::query;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub fusion: FusionMode,
    pub query_views: usize,
    /// Mean milliseconds per similarity, in the order given to [`run`].
    pub ms: Vec<f64>,
    /// Total time over all similarities relative to the single-view row.
    pub ratio_to_single: f64,
}

fn time_query(
    store: &IndexStore,
    views: &[DescriptorSet],
    spec: &QuerySpec,
    repeat: usize,
    exec: Exec,
) -> Result<f64, CliError> {
    // One untimed warm-up run.
    query(store, views, spec, exec)?;
    let start = Instant::now();
    for _ in 0..repeat {
        std::hint::black_box(query(store, views, spec, exec)?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / repeat as f64)
}

/// Times every fusion mode; `none` uses the first view only.
pub fn run(
    store: &IndexStore,
    views: &[DescriptorSet],
    similarities: &[SimilarityKind],
    modes: &[FusionMode],
    repeat: usize,
    exec: Exec,
) -> Result<Vec<BenchRow>, CliError> {
    if views.is_empty() {
        return Err(CliError::Usage("bench needs at least one query view".into()));
    }
    if repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    if similarities.is_empty() {
        return Err(CliError::Usage("no similarity selected".into()));
    }
    let single: f64 = similarities
        .iter()
        .map(|&sim| time_query(store, &views[..1], &QuerySpec::new(sim, FusionMode::None), repeat, exec))
        .sum::<Result<f64, _>>()?;
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let m = if mode.is_single() { 1 } else { views.len() };
        let ms = similarities
            .iter()
            .map(|&sim| time_query(store, &views[..m], &QuerySpec::new(sim, mode), repeat, exec))
            .collect::<Result<Vec<_>, _>>()?;
        let total: f64 = ms.iter().sum();
        rows.push(BenchRow {
            fusion: mode,
            query_views: m,
            ms,
            ratio_to_single: total / single.max(f64::MIN_POSITIVE),
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow], similarities: &[SimilarityKind]) -> String {
    let mut out = String::from("fusion,query_views");
    for s in similarities {
        let _ = write!(out, ",{}_ms", s.name());
    }
    out.push_str(",ratio_to_single\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.fusion.name(), r.query_views);
        for ms in &r.ms {
            let _ = write!(out, ",{ms:.4}");
        }
        let _ = writeln!(out, ",{:.3}", r.ratio_to_single);
    }
    out
}
