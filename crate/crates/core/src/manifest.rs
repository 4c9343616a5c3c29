//! Dataset manifests: database objects with their view files, and labelled queries.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    #[default]
    Clean,
    Cluttered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestObject {
    pub object_id: String,
    pub category: String,
    pub views: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub query_id: String,
    pub category: String,
    pub views: Vec<PathBuf>,
    #[serde(default)]
    pub background: Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub objects: Vec<ManifestObject>,
    #[serde(default)]
    pub queries: Vec<ManifestQuery>,
}

/// View identifier derived from a path: its file stem.
pub fn view_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl Manifest {
    /// Reads a manifest and resolves relative view paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.resolve(base);
        m.validate()?;
        Ok(m)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.objects.iter_mut().flat_map(|o| o.views.iter_mut()).for_each(fix);
        self.queries.iter_mut().flat_map(|q| q.views.iter_mut()).for_each(fix);
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |msg: String| Err(ManifestError::Invalid(msg));
        let mut ids = HashSet::new();
        for o in &self.objects {
            if o.object_id.is_empty() {
                return invalid("empty object_id".into());
            }
            if !ids.insert(o.object_id.as_str()) {
                return invalid(format!("duplicate object_id {}", o.object_id));
            }
            if o.views.is_empty() {
                return invalid(format!("object {} has no views", o.object_id));
            }
            let mut seen = HashSet::new();
            for v in &o.views {
                if !seen.insert(view_id(v)) {
                    return invalid(format!(
                        "object {} has two views named {}",
                        o.object_id,
                        view_id(v)
                    ));
                }
            }
        }
        let categories: HashSet<&str> = self.objects.iter().map(|o| o.category.as_str()).collect();
        let mut qids = HashSet::new();
        for q in &self.queries {
            if !qids.insert(q.query_id.as_str()) {
                return invalid(format!("duplicate query_id {}", q.query_id));
            }
            if q.views.is_empty() {
                return invalid(format!("query {} has no views", q.query_id));
            }
            if !categories.contains(q.category.as_str()) {
                return invalid(format!(
                    "query {} has category {} that no object carries",
                    q.query_id, q.category
                ));
            }
        }
        Ok(())
    }
}
