#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mvsearch_testkit::render;
use serde_json::json;

pub const OBJECTS: usize = 6;
pub const VIEWS: u32 = 3;
pub const QUERY_VIEWS: u32 = 5;
pub const SIZE: u32 = 96;

pub fn mvsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvsearch"))
        .args(args)
        .output()
        .expect("spawn mvsearch")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub store: PathBuf,
    /// Views of the first query, in order.
    pub query_views: Vec<PathBuf>,
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes images, a manifest and a small build config into `dir`.
pub fn write_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut objects = Vec::new();
    for i in 0..OBJECTS {
        let views: Vec<String> = (0..VIEWS)
            .map(|v| {
                let name = format!("img/obj{i}_{v}.png");
                render::save_png(&render::view(i as u64, v, SIZE), &dir.join(&name)).unwrap();
                name
            })
            .collect();
        objects.push(json!({"object_id": format!("obj{i}"), "category": format!("cat{}", i % 3), "views": views}));
    }
    let mut queries = Vec::new();
    for i in 0..3 {
        let views: Vec<String> = (0..QUERY_VIEWS)
            .map(|v| {
                let name = format!("img/q{i}_{v}.png");
                render::save_png(&render::view(i as u64, 10 + v, SIZE), &dir.join(&name)).unwrap();
                name
            })
            .collect();
        queries.push(json!({"query_id": format!("q{i}"), "category": format!("cat{}", i % 3), "views": views, "background": "clean"}));
    }
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, json!({"name": "toy", "objects": objects, "queries": queries}).to_string()).unwrap();
    let config = dir.join("build.json");
    std::fs::write(&config, json!({"corner_k": 10, "blob_k": 10, "kmeans": {"seed": 5}}).to_string()).unwrap();
    (manifest, config)
}

/// Dataset plus a store built through the binary, shared by all tests.
pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-fixture");
        let _ = std::fs::remove_dir_all(&dir);
        let (manifest, config) = write_dataset(&dir);
        let store = dir.join("store.mvix");
        let out = mvsearch(&["index", p(&manifest), p(&store), "--config", p(&config)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let query_views = (0..QUERY_VIEWS).map(|v| dir.join(format!("img/q0_{v}.png"))).collect();
        Fixture { dir, manifest, config, store, query_views }
    })
}

pub fn arg(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}
