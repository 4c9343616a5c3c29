//! Per-channel visual vocabularies and bag-of-visual-words histograms.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{FormatError, Reader, Writer};
use crate::features::{Channel, Descriptor, DescriptorSet, DESCRIPTOR_DIM};
use crate::kmeans::{kmeans, KMeansConfig, KMeansError};
use crate::par::Exec;

pub const MVVC_MAGIC: &[u8; 4] = b"MVVC";
const VERSION: u16 = 1;
/// Keeps the subsampling stream apart from the k-means seeding stream.
const SAMPLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("too few descriptors: need {needed}, have {available}")]
    TooFewDescriptors { needed: usize, available: usize },
    #[error("training descriptors mix corner and blob channels")]
    MixedChannels,
    #[error("channel mismatch: expected {expected}, got {found}")]
    ChannelMismatch { expected: Channel, found: Channel },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: u32,
    pub distortion: f64,
}

/// `k` centroids for one descriptor channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    channel: Channel,
    centroids: Vec<[f32; DESCRIPTOR_DIM]>,
    meta: TrainingMeta,
}

impl Vocabulary {
    pub fn new(
        channel: Channel,
        centroids: Vec<[f32; DESCRIPTOR_DIM]>,
        meta: TrainingMeta,
    ) -> Result<Self, VocabError> {
        if centroids.is_empty() {
            return Err(VocabError::Invalid("k must be at least 1".into()));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VocabError::Invalid("non-finite centroid entry".into()));
        }
        let mut seen = HashSet::with_capacity(centroids.len());
        for c in &centroids {
            if !seen.insert(c.map(f32::to_bits)) {
                return Err(VocabError::Invalid("duplicate centroid".into()));
            }
        }
        Ok(Self {
            channel,
            centroids,
            meta,
        })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[[f32; DESCRIPTOR_DIM]] {
        &self.centroids
    }

    pub fn meta(&self) -> TrainingMeta {
        self.meta
    }

    /// Nearest centroid by Euclidean distance, lowest index on ties.
    pub fn quantize(&self, d: &Descriptor) -> Result<usize, VocabError> {
        if d.channel != self.channel {
            return Err(VocabError::ChannelMismatch {
                expected: self.channel,
                found: d.channel,
            });
        }
        Ok(self.nearest(&d.values))
    }

    pub fn nearest(&self, values: &[f32; DESCRIPTOR_DIM]) -> usize {
        let q: [f64; DESCRIPTOR_DIM] = values.map(|v| v as f64);
        let mut best = (0, f64::INFINITY);
        'centroids: for (i, c) in self.centroids.iter().enumerate() {
            let mut acc = 0.0;
            for (qs, cs) in q.chunks_exact(16).zip(c.chunks_exact(16)) {
                for (a, &b) in qs.iter().zip(cs) {
                    let d = a - b as f64;
                    acc += d * d;
                }
                // Partial sums only grow, so this cannot change the argmin.
                if acc > best.1 {
                    continue 'centroids;
                }
            }
            if acc < best.1 {
                best = (i, acc);
            }
        }
        best.0
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_inner()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.bytes(MVVC_MAGIC);
        w.u16(VERSION);
        w.u8(self.channel.tag());
        w.u32(self.k() as u32);
        w.u16(DESCRIPTOR_DIM as u16);
        for c in &self.centroids {
            for &v in c {
                w.f32(v);
            }
        }
        w.u64(self.meta.seed);
        w.u32(self.meta.iterations);
        w.f64(self.meta.distortion);
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VocabError> {
        let mut r = Reader::new(bytes);
        let v = Self::read(&mut r)?;
        r.finish()?;
        Ok(v)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, VocabError> {
        r.magic("MVVC")?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(FormatError::BadVersion {
                found: version,
                expected: VERSION,
            }
            .into());
        }
        let tag = r.u8()?;
        let channel = Channel::from_tag(tag)
            .ok_or_else(|| FormatError::Corrupt(format!("unknown channel tag {tag}")))?;
        let k = r.u32()? as usize;
        let dim = r.u16()? as usize;
        if dim != DESCRIPTOR_DIM {
            return Err(FormatError::Corrupt(format!("centroid dimension {dim}")).into());
        }
        if k.saturating_mul(dim * 4) > r.remaining() {
            return Err(FormatError::Truncated.into());
        }
        let mut centroids = Vec::with_capacity(k);
        for _ in 0..k {
            let mut c = [0f32; DESCRIPTOR_DIM];
            for v in c.iter_mut() {
                *v = r.f32()?;
            }
            centroids.push(c);
        }
        let meta = TrainingMeta {
            seed: r.u64()?,
            iterations: r.u32()?,
            distortion: r.f64()?,
        };
        Self::new(channel, centroids, meta)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Trains a vocabulary of `k` words; see [`train_with_history`].
pub fn train(
    descriptors: &[Descriptor],
    k: usize,
    cfg: &KMeansConfig,
    exec: Exec,
) -> Result<Vocabulary, VocabError> {
    train_with_history(descriptors, k, cfg, exec).map(|(v, _)| v)
}

/// Runs k-means over the descriptors (uniformly subsampled to
/// `cfg.max_samples`) and returns the vocabulary with the per-iteration
/// distortion history.
pub fn train_with_history(
    descriptors: &[Descriptor],
    k: usize,
    cfg: &KMeansConfig,
    exec: Exec,
) -> Result<(Vocabulary, Vec<f64>), VocabError> {
    let refs: Vec<&Descriptor> = descriptors.iter().collect();
    train_pooled(&refs, k, cfg, exec)
}

/// [`train_with_history`] over descriptors borrowed from many sets.
pub fn train_pooled(
    descriptors: &[&Descriptor],
    k: usize,
    cfg: &KMeansConfig,
    exec: Exec,
) -> Result<(Vocabulary, Vec<f64>), VocabError> {
    let Some(first) = descriptors.first() else {
        return Err(VocabError::TooFewDescriptors {
            needed: k.max(1),
            available: 0,
        });
    };
    let channel = first.channel;
    if descriptors.iter().any(|d| d.channel != channel) {
        return Err(VocabError::MixedChannels);
    }
    if descriptors.len() < k {
        return Err(VocabError::TooFewDescriptors {
            needed: k,
            available: descriptors.len(),
        });
    }

    let sample: Vec<&Descriptor> = if descriptors.len() > cfg.max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLE_SALT);
        let mut idx =
            rand::seq::index::sample(&mut rng, descriptors.len(), cfg.max_samples).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| descriptors[i]).collect()
    } else {
        descriptors.to_vec()
    };
    let data: Vec<f32> = sample.iter().flat_map(|d| d.values).collect();

    let result = kmeans(&data, DESCRIPTOR_DIM, k, cfg, exec).map_err(|e| match e {
        KMeansError::TooFewPoints { needed, available } => {
            VocabError::TooFewDescriptors { needed, available }
        }
        KMeansError::TooFewDistinct { k, distinct } => VocabError::TooFewDescriptors {
            needed: k,
            available: distinct,
        },
        KMeansError::Invalid(msg) => VocabError::Invalid(msg),
    })?;

    let centroids = (0..k)
        .map(|i| {
            let mut c = [0f32; DESCRIPTOR_DIM];
            for (o, &v) in c.iter_mut().zip(result.centroid(i)) {
                *o = v as f32;
            }
            c
        })
        .collect();
    let meta = TrainingMeta {
        seed: cfg.seed,
        iterations: result.iterations as u32,
        distortion: result.distortion,
    };
    Ok((Vocabulary::new(channel, centroids, meta)?, result.history))
}

/// Raw word counts, corner block first, then blob block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BowHistogram {
    bins: Vec<u32>,
    corner_bins: usize,
}

impl BowHistogram {
    pub fn zeros(corner_bins: usize, blob_bins: usize) -> Self {
        Self {
            bins: vec![0; corner_bins + blob_bins],
            corner_bins,
        }
    }

    pub fn from_bins(bins: Vec<u32>, corner_bins: usize) -> Result<Self, VocabError> {
        if corner_bins > bins.len() {
            return Err(VocabError::Invalid(format!(
                "corner block of {corner_bins} bins exceeds histogram length {}",
                bins.len()
            )));
        }
        Ok(Self { bins, corner_bins })
    }

    pub fn bins(&self) -> &[u32] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn corner_bins(&self) -> usize {
        self.corner_bins
    }

    pub fn blob_bins(&self) -> usize {
        self.bins.len() - self.corner_bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&b| b as u64).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bins.iter().map(|&b| b as f64).collect()
    }
}

/// Concatenated corner/blob histogram of one image.
pub fn build_bow(
    ds: &DescriptorSet,
    corner_vocab: &Vocabulary,
    blob_vocab: &Vocabulary,
) -> Result<BowHistogram, VocabError> {
    build_bow_with(ds, corner_vocab, blob_vocab, Exec::Sequential)
}

pub fn build_bow_with(
    ds: &DescriptorSet,
    corner_vocab: &Vocabulary,
    blob_vocab: &Vocabulary,
    exec: Exec,
) -> Result<BowHistogram, VocabError> {
    for (vocab, expected) in [(corner_vocab, Channel::Corner), (blob_vocab, Channel::Blob)] {
        if vocab.channel() != expected {
            return Err(VocabError::ChannelMismatch {
                expected,
                found: vocab.channel(),
            });
        }
    }
    let mut hist = BowHistogram::zeros(corner_vocab.k(), blob_vocab.k());
    for (vocab, offset, list) in [
        (corner_vocab, 0, ds.corners()),
        (blob_vocab, corner_vocab.k(), ds.blobs()),
    ] {
        for word in exec.map(list, |d| vocab.nearest(&d.values)) {
            hist.bins[offset + word] += 1;
        }
    }
    Ok(hist)
}
