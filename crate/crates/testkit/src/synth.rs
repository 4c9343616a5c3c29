//! Synthetic multi-view objects generated directly as descriptors.
//!
//! Every category owns a ring of prototype descriptors per channel. An
//! object perturbs its category's ring; a view sees a contiguous arc of the
//! ring (its viewpoint) and samples noisy descriptors from it, mixed with
//! background descriptors shared by all categories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const DIM: usize = 128;
pub type Desc = [f32; DIM];

#[derive(Debug, Clone)]
pub struct SynthView {
    pub corners: Vec<Desc>,
    pub blobs: Vec<Desc>,
}

#[derive(Debug, Clone)]
pub struct SynthObject {
    pub id: String,
    pub category: String,
    pub views: Vec<SynthView>,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub categories: usize,
    pub objects_per_category: usize,
    pub queries_per_category: usize,
    pub views: usize,
    /// Prototype ring length per channel.
    pub prototypes: usize,
    /// Fraction of the ring one view sees.
    pub arc: f64,
    pub descriptors_per_view: usize,
    /// Fraction of each view's descriptors drawn from the shared background.
    pub clutter: f64,
    pub object_noise: f32,
    pub view_noise: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            categories: 5,
            objects_per_category: 4,
            queries_per_category: 2,
            views: 4,
            prototypes: 16,
            arc: 0.3,
            descriptors_per_view: 40,
            clutter: 0.4,
            object_noise: 0.35,
            view_noise: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub objects: Vec<SynthObject>,
    pub queries: Vec<SynthObject>,
}

fn normalize(v: &mut Desc) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn perturb(base: &Desc, sigma: f32, rng: &mut ChaCha8Rng) -> Desc {
    let noise = Normal::new(0.0f32, sigma / (DIM as f32).sqrt()).unwrap();
    let mut out = *base;
    for v in out.iter_mut() {
        *v = (*v + noise.sample(rng)).max(0.0);
    }
    normalize(&mut out);
    out
}

fn random_desc(rng: &mut ChaCha8Rng) -> Desc {
    let mut out = [0f32; DIM];
    for v in out.iter_mut() {
        *v = rng.random::<f32>().powi(3);
    }
    normalize(&mut out);
    out
}

struct Rings {
    /// `[channel][prototype]`.
    rings: [Vec<Desc>; 2],
}

fn draw_view(
    rings: &Rings,
    background: &[Vec<Desc>; 2],
    start: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> SynthView {
    let p = cfg.prototypes;
    let span = ((cfg.arc * p as f64).round() as usize).clamp(1, p);
    let first = (start * p as f64).floor() as usize;
    let mut channel = |c: usize| -> Vec<Desc> {
        (0..cfg.descriptors_per_view)
            .map(|_| {
                let base = if rng.random::<f64>() < cfg.clutter {
                    &background[c][rng.random_range(0..background[c].len())]
                } else {
                    &rings.rings[c][(first + rng.random_range(0..span)) % p]
                };
                perturb(base, cfg.view_noise, rng)
            })
            .collect()
    };
    let corners = channel(0);
    let blobs = channel(1);
    SynthView { corners, blobs }
}

fn instance(
    id: String,
    category: usize,
    categories: &[Rings],
    background: &[Vec<Desc>; 2],
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> SynthObject {
    let own = Rings {
        rings: [0, 1].map(|c| {
            categories[category].rings[c]
                .iter()
                .map(|d| perturb(d, cfg.object_noise, rng))
                .collect()
        }),
    };
    let offset: f64 = rng.random();
    let views = (0..cfg.views)
        .map(|v| {
            let start = (offset + v as f64 / cfg.views as f64).fract();
            draw_view(&own, background, start, cfg, rng)
        })
        .collect();
    SynthObject {
        id,
        category: format!("cat{category}"),
        views,
    }
}

pub fn dataset(seed: u64, cfg: &SynthConfig) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories: Vec<Rings> = (0..cfg.categories)
        .map(|_| Rings {
            rings: [0, 1].map(|_| (0..cfg.prototypes).map(|_| random_desc(&mut rng)).collect()),
        })
        .collect();
    let background: [Vec<Desc>; 2] =
        [0, 1].map(|_| (0..cfg.prototypes * 2).map(|_| random_desc(&mut rng)).collect());
    let mut objects = Vec::new();
    let mut queries = Vec::new();
    for c in 0..cfg.categories {
        for i in 0..cfg.objects_per_category {
            objects.push(instance(format!("obj{c}_{i}"), c, &categories, &background, cfg, &mut rng));
        }
        for i in 0..cfg.queries_per_category {
            queries.push(instance(format!("q{c}_{i}"), c, &categories, &background, cfg, &mut rng));
        }
    }
    SynthDataset { objects, queries }
}
