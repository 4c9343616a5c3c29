use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mvsearch_core::eval::{curve_file_name, precision_curve, PrecisionCurve, QueryCase};
use mvsearch_core::features::{load_view, save_descriptors, DescriptorSet, DetectorConfig};
use mvsearch_core::fusion::{FusionMode, ResultList};
use mvsearch_core::index::{BuildConfig, IndexStore, QuerySpec};
use mvsearch_core::manifest::Manifest;
use mvsearch_core::similarity::SimilarityKind;
use mvsearch_core::Exec;
use mvsearch_service::SessionManager;

use crate::{view_error, CliError};

/// Build configuration recorded in a store, or the default one.
pub fn store_build_config(store: &IndexStore) -> BuildConfig {
    serde_json::from_str(store.config()).unwrap_or_default()
}

pub fn load_views(paths: &[PathBuf], detector: &DetectorConfig, exec: Exec) -> Result<Vec<DescriptorSet>, CliError> {
    exec.try_map(paths, |p| load_view(p, detector).map_err(|e| view_error(p, e)))
}

/// Writes one `MVDS` file per manifest image (objects and queries) into
/// `out`, named `<entry id>__<view index>.mvds`. Returns the written paths.
pub fn extract(
    manifest: &Manifest,
    detector: &DetectorConfig,
    out: &Path,
    exec: Exec,
) -> Result<Vec<PathBuf>, CliError> {
    let jobs: Vec<(PathBuf, PathBuf)> = manifest
        .objects
        .iter()
        .map(|o| (&o.object_id, &o.views))
        .chain(manifest.queries.iter().map(|q| (&q.query_id, &q.views)))
        .flat_map(|(id, views)| {
            views
                .iter()
                .enumerate()
                .map(move |(i, v)| (v.clone(), out.join(format!("{id}__{i}.mvds"))))
        })
        .collect();
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    exec.try_map(&jobs, |(src, dst)| {
        let ds = load_view(src, detector).map_err(|e| view_error(src, e))?;
        save_descriptors(&ds, dst).map_err(|e| view_error(dst, e))?;
        Ok(dst.clone())
    })
}

/// Trains the vocabularies, builds the store and writes it to `out`.
pub fn index(manifest: &Manifest, cfg: &BuildConfig, out: &Path, exec: Exec) -> Result<IndexStore, CliError> {
    if manifest.objects.is_empty() {
        return Err(CliError::Data("manifest lists no objects".into()));
    }
    let store = IndexStore::build(manifest, cfg, exec)?;
    store.save(out)?;
    Ok(store)
}

pub fn index_status_line(store: &IndexStore, out: &Path) -> String {
    format!(
        "indexed {} objects, {} views, {} bins -> {}",
        store.objects().len(),
        store.view_count(),
        store.bins(),
        out.display()
    )
}

pub fn query(
    store: &IndexStore,
    views: &[DescriptorSet],
    spec: &QuerySpec,
    exec: Exec,
) -> Result<ResultList, CliError> {
    let hists = views
        .iter()
        .map(|ds| store.histogram(ds, exec))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[u32]> = hists.iter().map(|h| h.bins()).collect();
    Ok(store.query(&refs, spec, exec)?)
}

pub fn format_table(results: &ResultList) -> String {
    let id_w = results.iter().map(|e| e.object_id.len()).max().unwrap_or(0).max(9);
    let cat_w = results.iter().map(|e| e.category.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:>4}  {:<id_w$}  {:<cat_w$}  {:>10}\n", "rank", "object_id", "category", "score");
    for (i, e) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<id_w$}  {:<cat_w$}  {:>10.6}",
            i + 1,
            e.object_id,
            e.category,
            e.score
        );
    }
    out
}

/// Histograms of every manifest query.
pub fn query_cases(
    store: &IndexStore,
    manifest: &Manifest,
    detector: &DetectorConfig,
    exec: Exec,
) -> Result<Vec<QueryCase>, CliError> {
    let mut cases = Vec::with_capacity(manifest.queries.len());
    for q in &manifest.queries {
        let sets = load_views(&q.views, detector, exec)?;
        let hists = sets
            .iter()
            .map(|ds| store.histogram(ds, exec))
            .collect::<Result<Vec<_>, _>>()?;
        cases.push(QueryCase {
            query_id: q.query_id.clone(),
            category: q.category.clone(),
            hists,
        });
    }
    Ok(cases)
}

/// Writes one precision curve per (similarity, fusion) pair into `out`.
#[allow(clippy::too_many_arguments)]
pub fn eval(
    store: &IndexStore,
    cases: &[QueryCase],
    similarities: &[SimilarityKind],
    fusions: &[FusionMode],
    kmax: usize,
    list_depth: usize,
    out: &Path,
    exec: Exec,
) -> Result<Vec<(PathBuf, PrecisionCurve)>, CliError> {
    if kmax == 0 {
        return Err(CliError::Usage("--kmax must be at least 1".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut written = Vec::new();
    for &sim in similarities {
        for &mode in fusions {
            let spec = QuerySpec::new(sim, mode).with_list_depth(list_depth);
            let curve = precision_curve(store, cases, &spec, kmax, exec)?;
            let path = out.join(curve_file_name(sim.name(), mode.name()));
            curve.write_csv(&path)?;
            written.push((path, curve));
        }
    }
    Ok(written)
}

pub fn load_store(path: &Path) -> Result<IndexStore, CliError> {
    IndexStore::load(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        match CliError::from(e) {
            CliError::Io(_) => CliError::Io(msg),
            _ => CliError::Data(msg),
        }
    })
}

/// Serves the store over HTTP until the process is stopped.
pub fn serve(store: IndexStore, addr: SocketAddr, exec: Exec) -> Result<(), CliError> {
    let detector = store_build_config(&store).detector;
    let manager = Arc::new(SessionManager::new(Some(Arc::new(store)), detector).with_exec(exec));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    runtime
        .block_on(mvsearch_service::serve(manager, addr, |bound| {
            eprintln!("listening on http://{bound}");
        }))
        .map_err(|e| CliError::Io(e.to_string()))
}
