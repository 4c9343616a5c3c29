//! The object database and the query planner.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{FormatError, Reader, Writer};
use crate::features::{load_view, Channel, DescriptorSet, DetectorConfig, FeatureError};
use crate::fusion::{
    fuse_image_scores, FusionError, FusionMode, LateFusionKind, ResultEntry, ResultList,
    RunningFusion, ScoreMatrix,
};
use crate::kmeans::KMeansConfig;
use crate::manifest::{view_id, Manifest};
use crate::par::Exec;
use crate::similarity::{Bin, SimilarityKind};
use crate::vocabulary::{build_bow_with, train_pooled, BowHistogram, VocabError, Vocabulary};

pub const MVIX_MAGIC: &[u8; 4] = b"MVIX";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot load view {path}: {source}")]
    View {
        path: PathBuf,
        source: FeatureError,
    },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("duplicate object_id {0}")]
    DuplicateObject(String),
    #[error("invalid store: {0}")]
    Invalid(String),
    #[error("invalid query: {0}")]
    SpecInvalid(String),
    #[error("the store holds no objects")]
    EmptyStore,
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub view_id: String,
    /// Where the view came from, as given at build time.
    pub source: String,
    pub hist: BowHistogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub object_id: String,
    pub category: String,
    pub views: Vec<ViewRecord>,
}

/// Extracted views of one object, ready for indexing.
#[derive(Debug, Clone)]
pub struct ObjectViews {
    pub object_id: String,
    pub category: String,
    /// `(view_id, source, descriptors)`.
    pub views: Vec<(String, String, DescriptorSet)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub detector: DetectorConfig,
    pub corner_k: usize,
    pub blob_k: usize,
    pub kmeans: KMeansConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            corner_k: 3000,
            blob_k: 3000,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuerySpec {
    pub similarity: SimilarityKind,
    pub mode: FusionMode,
    pub k: usize,
    /// Depth `L` of the per-image lists used by `count`.
    pub list_depth: usize,
}

impl QuerySpec {
    pub fn new(similarity: SimilarityKind, mode: FusionMode) -> Self {
        Self {
            similarity,
            mode,
            k: 20,
            list_depth: 100,
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    pub fn with_list_depth(self, list_depth: usize) -> Self {
        Self { list_depth, ..self }
    }

    /// Validates these settings for a query of `m` images.
    pub fn validate(&self, m: usize) -> Result<(), IndexError> {
        if m == 0 {
            return Err(IndexError::SpecInvalid("a query needs at least one image".into()));
        }
        if self.mode.is_single() && m != 1 {
            return Err(IndexError::SpecInvalid(format!(
                "fusion 'none' takes exactly one image, got {m}"
            )));
        }
        if self.k == 0 {
            return Err(IndexError::SpecInvalid("k must be at least 1".into()));
        }
        if self.list_depth == 0 {
            return Err(IndexError::SpecInvalid("list depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexStore {
    corner_vocab: Vocabulary,
    blob_vocab: Vocabulary,
    objects: Vec<ObjectRecord>,
    config: String,
    by_id: HashMap<String, usize>,
    /// Start of each object's views in the flattened view order, plus the total.
    offsets: Vec<usize>,
}

impl IndexStore {
    pub fn new(
        corner_vocab: Vocabulary,
        blob_vocab: Vocabulary,
        objects: Vec<ObjectRecord>,
        config: String,
    ) -> Result<Self, IndexError> {
        if corner_vocab.channel() != Channel::Corner || blob_vocab.channel() != Channel::Blob {
            return Err(IndexError::Invalid("vocabulary channels out of order".into()));
        }
        let (kc, kb) = (corner_vocab.k(), blob_vocab.k());
        let mut by_id = HashMap::with_capacity(objects.len());
        let mut offsets = Vec::with_capacity(objects.len() + 1);
        let mut total = 0;
        for (i, o) in objects.iter().enumerate() {
            if by_id.insert(o.object_id.clone(), i).is_some() {
                return Err(IndexError::DuplicateObject(o.object_id.clone()));
            }
            if o.views.is_empty() {
                return Err(IndexError::Invalid(format!("object {} has no views", o.object_id)));
            }
            let mut seen = HashSet::new();
            for v in &o.views {
                if !seen.insert(v.view_id.as_str()) {
                    return Err(IndexError::Invalid(format!(
                        "object {} repeats view {}",
                        o.object_id, v.view_id
                    )));
                }
                if v.hist.corner_bins() != kc || v.hist.blob_bins() != kb {
                    return Err(IndexError::Invalid(format!(
                        "view {}/{} has {}+{} bins, vocabularies have {kc}+{kb}",
                        o.object_id,
                        v.view_id,
                        v.hist.corner_bins(),
                        v.hist.blob_bins()
                    )));
                }
            }
            offsets.push(total);
            total += o.views.len();
        }
        offsets.push(total);
        Ok(Self {
            corner_vocab,
            blob_vocab,
            objects,
            config,
            by_id,
            offsets,
        })
    }

    /// Trains both vocabularies on every view's descriptors and indexes the views.
    pub fn build_from_descriptors(
        objects: &[ObjectViews],
        cfg: &BuildConfig,
        exec: Exec,
    ) -> Result<Self, IndexError> {
        let mut ids = HashSet::new();
        for o in objects {
            if !ids.insert(o.object_id.as_str()) {
                return Err(IndexError::DuplicateObject(o.object_id.clone()));
            }
        }
        let sets = || objects.iter().flat_map(|o| o.views.iter().map(|v| &v.2));
        let pool = |ch: Channel| sets().flat_map(|ds| ds.channel(ch)).collect::<Vec<_>>();
        let (corner_vocab, _) = train_pooled(&pool(Channel::Corner), cfg.corner_k, &cfg.kmeans, exec)?;
        let (blob_vocab, _) = train_pooled(&pool(Channel::Blob), cfg.blob_k, &cfg.kmeans, exec)?;

        let mut records = Vec::with_capacity(objects.len());
        for o in objects {
            let mut views = Vec::with_capacity(o.views.len());
            for (vid, source, ds) in &o.views {
                views.push(ViewRecord {
                    view_id: vid.clone(),
                    source: source.clone(),
                    hist: build_bow_with(ds, &corner_vocab, &blob_vocab, exec)?,
                });
            }
            records.push(ObjectRecord {
                object_id: o.object_id.clone(),
                category: o.category.clone(),
                views,
            });
        }
        let config = serde_json::to_string(cfg)
            .map_err(|e| IndexError::Invalid(format!("config snapshot: {e}")))?;
        Self::new(corner_vocab, blob_vocab, records, config)
    }

    /// Extracts (or loads) every view named in the manifest, then builds.
    pub fn build(manifest: &Manifest, cfg: &BuildConfig, exec: Exec) -> Result<Self, IndexError> {
        let paths: Vec<&PathBuf> = manifest.objects.iter().flat_map(|o| &o.views).collect();
        let sets = exec.try_map(&paths, |p| {
            load_view(p, &cfg.detector).map_err(|source| IndexError::View {
                path: p.to_path_buf(),
                source,
            })
        })?;
        let mut sets = sets.into_iter();
        let objects: Vec<ObjectViews> = manifest
            .objects
            .iter()
            .map(|o| ObjectViews {
                object_id: o.object_id.clone(),
                category: o.category.clone(),
                views: o
                    .views
                    .iter()
                    .zip(sets.by_ref())
                    .map(|(p, ds)| (view_id(p), p.display().to_string(), ds))
                    .collect(),
            })
            .collect();
        Self::build_from_descriptors(&objects, cfg, exec)
    }

    pub fn corner_vocab(&self) -> &Vocabulary {
        &self.corner_vocab
    }

    pub fn blob_vocab(&self) -> &Vocabulary {
        &self.blob_vocab
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&ObjectRecord> {
        self.by_id.get(id).map(|&i| &self.objects[i])
    }

    /// JSON snapshot of the build configuration.
    pub fn config(&self) -> &str {
        &self.config
    }

    pub fn view_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn bins(&self) -> usize {
        self.corner_vocab.k() + self.blob_vocab.k()
    }

    /// Quantizes a query image against the store's vocabularies.
    pub fn histogram(&self, ds: &DescriptorSet, exec: Exec) -> Result<BowHistogram, IndexError> {
        Ok(build_bow_with(ds, &self.corner_vocab, &self.blob_vocab, exec)?)
    }

    fn flat_views(&self) -> Vec<&BowHistogram> {
        self.objects
            .iter()
            .flat_map(|o| o.views.iter().map(|v| &v.hist))
            .collect()
    }

    /// Similarity of one query histogram to every stored view, objects in
    /// store order and views in object order.
    pub fn view_scores<B: Bin + Sync>(
        &self,
        q: &[B],
        similarity: SimilarityKind,
        exec: Exec,
    ) -> Result<Vec<f64>, IndexError> {
        if q.len() != self.bins() {
            return Err(IndexError::SpecInvalid(format!(
                "query histogram has {} bins, store has {}",
                q.len(),
                self.bins()
            )));
        }
        Ok(exec.map(&self.flat_views(), |h| similarity.score(q, h.bins())))
    }

    /// Ranks objects from per-query view scores (see [`view_scores`](Self::view_scores)).
    /// Single and early modes take exactly one score list, the one of the
    /// (fused) query.
    pub fn rank(
        &self,
        per_query: &[Vec<f64>],
        mode: FusionMode,
        k: usize,
        list_depth: usize,
    ) -> Result<ResultList, IndexError> {
        if self.objects.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        if per_query.is_empty() {
            return Err(IndexError::SpecInvalid("no query scores".into()));
        }
        if let Some(l) = per_query.iter().find(|l| l.len() != self.view_count()) {
            return Err(IndexError::SpecInvalid(format!(
                "{} view scores for {} stored views",
                l.len(),
                self.view_count()
            )));
        }
        let view_max = |scores: &[f64], i: usize| {
            scores[self.offsets[i]..self.offsets[i + 1]]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let object_scores: Vec<f64> = match mode {
            FusionMode::None | FusionMode::Early(_) => {
                if per_query.len() != 1 {
                    return Err(IndexError::SpecInvalid(format!(
                        "mode {mode} ranks one score list, got {}",
                        per_query.len()
                    )));
                }
                (0..self.objects.len()).map(|i| view_max(&per_query[0], i)).collect()
            }
            FusionMode::Late(LateFusionKind::Set(kind)) => {
                let m = per_query.len();
                (0..self.objects.len())
                    .map(|i| {
                        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
                        let rows: Vec<f64> = per_query.iter().flat_map(|l| &l[a..b]).copied().collect();
                        ScoreMatrix::new(m, b - a, rows).map(|sm| kind.score(&sm))
                    })
                    .collect::<Result<_, _>>()?
            }
            FusionMode::Late(LateFusionKind::Image(kind)) => {
                let fused = fuse_image_scores(per_query, kind, list_depth)?;
                (0..self.objects.len()).map(|i| view_max(&fused, i)).collect()
            }
        };
        let entries = self
            .objects
            .iter()
            .zip(object_scores)
            .map(|(o, score)| ResultEntry {
                object_id: o.object_id.clone(),
                category: o.category.clone(),
                score,
            })
            .collect();
        Ok(ResultList::ranked(entries, k))
    }

    pub fn query<B: Bin + Sync>(
        &self,
        hists: &[&[B]],
        spec: &QuerySpec,
        exec: Exec,
    ) -> Result<ResultList, IndexError> {
        spec.validate(hists.len())?;
        if self.objects.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        let per_query = match spec.mode {
            FusionMode::None => vec![self.view_scores(hists[0], spec.similarity, exec)?],
            FusionMode::Early(kind) => {
                let mut run = RunningFusion::new(kind);
                for h in hists {
                    run.push(h)?;
                }
                vec![self.view_scores(&run.finish()?, spec.similarity, exec)?]
            }
            FusionMode::Late(_) => hists
                .iter()
                .map(|h| self.view_scores(h, spec.similarity, exec))
                .collect::<Result<_, _>>()?,
        };
        self.rank(&per_query, spec.mode, spec.k, spec.list_depth)
    }

    /// [`query`](Self::query) with stored-count histograms.
    pub fn query_hists(
        &self,
        hists: &[BowHistogram],
        spec: &QuerySpec,
        exec: Exec,
    ) -> Result<ResultList, IndexError> {
        let refs: Vec<&[u32]> = hists.iter().map(|h| h.bins()).collect();
        self.query(&refs, spec, exec)
    }

    pub fn encode(&self) -> Result<Vec<u8>, IndexError> {
        let mut w = Writer::new();
        w.bytes(MVIX_MAGIC);
        w.u16(VERSION);
        self.corner_vocab.write(&mut w);
        self.blob_vocab.write(&mut w);
        w.u32(self.objects.len() as u32);
        for o in &self.objects {
            w.str(&o.object_id)?;
            w.str(&o.category)?;
            let n = u16::try_from(o.views.len())
                .map_err(|_| IndexError::Invalid(format!("object {} has too many views", o.object_id)))?;
            w.u16(n);
            for v in &o.views {
                w.str(&v.view_id)?;
                w.str(&v.source)?;
                w.u32(v.hist.len() as u32);
                for &b in v.hist.bins() {
                    w.u32(b);
                }
            }
        }
        w.str(&self.config)?;
        Ok(w.into_inner())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IndexError> {
        Self::decode_inner(bytes).map_err(|e| match e {
            IndexError::Format(FormatError::Truncated) => {
                IndexError::Format(FormatError::Corrupt("truncated store".into()))
            }
            IndexError::Vocab(VocabError::Format(FormatError::Truncated)) => {
                IndexError::Format(FormatError::Corrupt("truncated vocabulary block".into()))
            }
            IndexError::Vocab(VocabError::Format(f)) => IndexError::Format(f),
            IndexError::Vocab(v) => IndexError::Format(FormatError::Corrupt(v.to_string())),
            IndexError::Invalid(msg) | IndexError::DuplicateObject(msg) => {
                IndexError::Format(FormatError::Corrupt(msg))
            }
            other => other,
        })
    }

    fn decode_inner(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader::new(bytes);
        r.magic("MVIX")?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(FormatError::BadVersion {
                found: version,
                expected: VERSION,
            }
            .into());
        }
        let corner_vocab = Vocabulary::read(&mut r)?;
        let blob_vocab = Vocabulary::read(&mut r)?;
        let bins = corner_vocab.k() + blob_vocab.k();
        let count = r.u32()? as usize;
        let mut objects = Vec::with_capacity(count.min(r.remaining()));
        for _ in 0..count {
            let object_id = r.str()?;
            let category = r.str()?;
            let n = r.u16()? as usize;
            let mut views = Vec::with_capacity(n);
            for _ in 0..n {
                let view_id = r.str()?;
                let source = r.str()?;
                let len = r.u32()? as usize;
                if len != bins {
                    return Err(FormatError::Corrupt(format!(
                        "histogram of {len} bins, vocabularies have {bins}"
                    ))
                    .into());
                }
                let raw = r.take(len * 4)?;
                let hist = raw
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                views.push(ViewRecord {
                    view_id,
                    source,
                    hist: BowHistogram::from_bins(hist, corner_vocab.k())?,
                });
            }
            objects.push(ObjectRecord {
                object_id,
                category,
                views,
            });
        }
        let config = r.str()?;
        r.finish()?;
        Self::new(corner_vocab, blob_vocab, objects, config)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::decode(&std::fs::read(path)?)
    }
}
