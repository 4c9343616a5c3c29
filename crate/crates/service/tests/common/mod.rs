#![allow(dead_code)]

use std::sync::Arc;

use mvsearch_core::features::{encode_descriptors, Channel, Descriptor, DescriptorSet, DetectorConfig, DESCRIPTOR_DIM};
use mvsearch_core::index::{BuildConfig, IndexStore, ObjectViews};
use mvsearch_core::kmeans::KMeansConfig;
use mvsearch_core::Exec;
use mvsearch_service::SessionManager;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_set(rng: &mut ChaCha8Rng, id: &str) -> DescriptorSet {
    let mut desc = |channel| {
        let mut v = [0f32; DESCRIPTOR_DIM];
        for x in v.iter_mut() {
            *x = rng.random::<f32>();
        }
        Descriptor::new(v, channel)
    };
    let nc = 6 + (id.len() % 5);
    let corners = (0..nc).map(|_| desc(Channel::Corner)).collect();
    let blobs = (0..5).map(|_| desc(Channel::Blob)).collect();
    DescriptorSet::new(id, corners, blobs).unwrap()
}

/// A store of `objects` objects with `views` random views each.
pub fn random_store(seed: u64, objects: usize, views: usize) -> IndexStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<ObjectViews> = (0..objects)
        .map(|i| ObjectViews {
            object_id: format!("obj{i}"),
            category: format!("cat{}", i % 2),
            views: (0..views)
                .map(|j| {
                    let id = format!("obj{i}_v{j}");
                    let ds = random_set(&mut rng, &id);
                    (id.clone(), format!("images/{id}.png"), ds)
                })
                .collect(),
        })
        .collect();
    let cfg = BuildConfig {
        corner_k: 6,
        blob_k: 4,
        kmeans: KMeansConfig {
            seed,
            ..KMeansConfig::default()
        },
        ..BuildConfig::default()
    };
    IndexStore::build_from_descriptors(&data, &cfg, Exec::Sequential).unwrap()
}

pub fn query_payloads(seed: u64, m: usize) -> (Vec<DescriptorSet>, Vec<Vec<u8>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let sets: Vec<_> = (0..m).map(|i| random_set(&mut rng, &format!("q{i}"))).collect();
    let bytes = sets.iter().map(encode_descriptors).collect();
    (sets, bytes)
}

pub fn manager(store: IndexStore) -> Arc<SessionManager> {
    Arc::new(SessionManager::new(Some(Arc::new(store)), DetectorConfig::default()))
}
