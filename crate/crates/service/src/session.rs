//! Incremental query sessions. Each accepted view is extracted and matched
//! on its own worker thread while further views may still arrive;
//! finalize waits for the workers and fuses in arrival order.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;

use mvsearch_core::features::{
    decode_descriptors, extract, DescriptorSet, DetectorConfig, GrayImage, MIN_IMAGE_SIDE,
    MVDS_MAGIC,
};
use mvsearch_core::fusion::{EarlyFusionKind, FusionMode, ResultList, RunningFusion};
use mvsearch_core::index::{IndexStore, QuerySpec};
use mvsearch_core::similarity::{SimilarityKind, UnknownName};
use mvsearch_core::vocabulary::BowHistogram;
use mvsearch_core::Exec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("no index is loaded")]
    NoIndex,
    #[error("{0}")]
    BadSpec(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("session {0} is finalized")]
    Finalized(String),
    #[error("{0}")]
    MalformedPayload(String),
    #[error("session {0} has no views")]
    EmptySession(String),
    #[error("{0}")]
    Internal(String),
}

impl SessionError {
    /// Stable error code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NoIndex => "no-index",
            SessionError::BadSpec(_) => "bad-spec",
            SessionError::UnknownSession(_) => "unknown-session",
            SessionError::UnknownObject(_) => "unknown-object",
            SessionError::Finalized(_) => "session-finalized",
            SessionError::MalformedPayload(_) => "malformed-payload",
            SessionError::EmptySession(_) => "empty-session",
            SessionError::Internal(_) => "internal",
        }
    }
}

/// Session template as sent by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub similarity: String,
    pub fusion: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_list_depth")]
    pub list_depth: usize,
}

fn default_k() -> usize {
    20
}

fn default_list_depth() -> usize {
    100
}

impl SessionRequest {
    pub fn to_spec(&self) -> Result<QuerySpec, SessionError> {
        let similarity: SimilarityKind = self
            .similarity
            .parse()
            .map_err(|e: UnknownName| SessionError::BadSpec(e.to_string()))?;
        let mode: FusionMode = self
            .fusion
            .parse()
            .map_err(|e: UnknownName| SessionError::BadSpec(e.to_string()))?;
        if self.k == 0 {
            return Err(SessionError::BadSpec("k must be at least 1".into()));
        }
        if self.list_depth == 0 {
            return Err(SessionError::BadSpec("list_depth must be at least 1".into()));
        }
        Ok(QuerySpec {
            similarity,
            mode,
            k: self.k,
            list_depth: self.list_depth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewState {
    Received,
    Extracted,
    Matched,
    Failed,
}

#[derive(Debug, Default)]
struct ViewSlot {
    state: Option<ViewState>,
    hist: Option<BowHistogram>,
    scores: Option<Vec<f64>>,
    error: Option<String>,
}

impl ViewSlot {
    fn state(&self) -> ViewState {
        self.state.unwrap_or(ViewState::Received)
    }
}

#[derive(Debug, Default)]
struct SessionState {
    views: Vec<ViewSlot>,
    /// Early fusion: histograms folded so far, always a prefix of `views`.
    running: Option<RunningFusion>,
    folded: usize,
    closing: bool,
    result: Option<ResultList>,
}

#[derive(Debug)]
struct Session {
    spec: QuerySpec,
    state: Mutex<SessionState>,
    changed: Condvar,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewStatus {
    pub ordinal: usize,
    pub state: ViewState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub similarity: String,
    pub fusion: String,
    pub k: usize,
    pub list_depth: usize,
    pub finalized: bool,
    pub views: Vec<ViewStatus>,
}

enum Payload {
    Descriptors(DescriptorSet),
    Image(GrayImage),
}

pub struct SessionManager {
    store: Option<Arc<IndexStore>>,
    detector: DetectorConfig,
    exec: Exec,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

impl SessionManager {
    pub fn new(store: Option<Arc<IndexStore>>, detector: DetectorConfig) -> Self {
        Self {
            store,
            detector,
            exec: Exec::default(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn store(&self) -> Result<&Arc<IndexStore>, SessionError> {
        self.store.as_ref().ok_or(SessionError::NoIndex)
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, SessionError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn create(&self, request: &SessionRequest) -> Result<String, SessionError> {
        self.store()?;
        let spec = request.to_spec()?;
        let id = uuid::Uuid::new_v4().to_string();
        let session = Arc::new(Session {
            spec,
            state: Mutex::new(SessionState::default()),
            changed: Condvar::new(),
        });
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), session);
        Ok(id)
    }

    fn parse_payload(&self, bytes: &[u8]) -> Result<Payload, SessionError> {
        let bad = |e: &dyn std::fmt::Display| SessionError::MalformedPayload(e.to_string());
        if bytes.starts_with(MVDS_MAGIC) {
            return decode_descriptors(bytes, "").map(Payload::Descriptors).map_err(|e| bad(&e));
        }
        let img = GrayImage::decode(bytes, self.detector.max_image_side).map_err(|e| bad(&e))?;
        if img.width() < MIN_IMAGE_SIDE
            || img.height() < MIN_IMAGE_SIDE
        {
            return Err(SessionError::MalformedPayload(format!(
                "image too small: {}x{}",
                img.width(),
                img.height()
            )));
        }
        Ok(Payload::Image(img))
    }

    /// Accepts one view and starts its extraction and matching in the
    /// background. Returns the 1-based arrival ordinal.
    pub fn add_view(&self, id: &str, payload: &[u8]) -> Result<usize, SessionError> {
        let session = self.session(id)?;
        let store = Arc::clone(self.store()?);
        let parsed = self.parse_payload(payload)?;

        let index = {
            let mut st = session.lock();
            if st.closing {
                return Err(SessionError::Finalized(id.to_string()));
            }
            if session.spec.mode.is_single() && !st.views.is_empty() {
                return Err(SessionError::BadSpec(
                    "fusion 'none' accepts a single view".into(),
                ));
            }
            st.views.push(ViewSlot::default());
            st.views.len() - 1
        };

        let detector = self.detector.clone();
        let exec = self.exec;
        let worker = Arc::clone(&session);
        thread::spawn(move || process_view(&worker, index, parsed, &store, &detector, exec));
        Ok(index + 1)
    }

    /// Waits for every accepted view, fuses, and caches the result list.
    pub fn finalize(&self, id: &str) -> Result<ResultList, SessionError> {
        let session = self.session(id)?;
        let store = self.store()?;
        let mut st = session.lock();
        if let Some(r) = &st.result {
            return Ok(r.clone());
        }
        if st.views.is_empty() {
            return Err(SessionError::EmptySession(id.to_string()));
        }
        st.closing = true;
        while st
            .views
            .iter()
            .any(|v| !matches!(v.state(), ViewState::Matched | ViewState::Failed))
        {
            st = session.changed.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if let Some((i, v)) = st.views.iter().enumerate().find(|(_, v)| v.state() == ViewState::Failed) {
            let msg = v.error.clone().unwrap_or_default();
            return Err(SessionError::MalformedPayload(format!("view {}: {msg}", i + 1)));
        }

        let spec = &session.spec;
        let per_query = match spec.mode {
            FusionMode::Early(_) => {
                let running = st.running.as_ref().ok_or_else(|| SessionError::Internal("no fused histogram".into()))?;
                let fused = running.current().map_err(|e| SessionError::Internal(e.to_string()))?;
                vec![store
                    .view_scores(fused.as_slice(), spec.similarity, self.exec)
                    .map_err(|e| SessionError::Internal(e.to_string()))?]
            }
            _ => st
                .views
                .iter()
                .map(|v| v.scores.clone().ok_or_else(|| SessionError::Internal("missing view scores".into())))
                .collect::<Result<_, _>>()?,
        };
        let result = store
            .rank(&per_query, spec.mode, spec.k, spec.list_depth)
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        st.result = Some(result.clone());
        Ok(result)
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, SessionError> {
        let session = self.session(id)?;
        let st = session.lock();
        let spec = &session.spec;
        Ok(SessionStatus {
            session_id: id.to_string(),
            similarity: spec.similarity.name().to_string(),
            fusion: spec.mode.name().to_string(),
            k: spec.k,
            list_depth: spec.list_depth,
            finalized: st.result.is_some(),
            views: st
                .views
                .iter()
                .enumerate()
                .map(|(i, v)| ViewStatus {
                    ordinal: i + 1,
                    state: v.state(),
                    error: v.error.clone(),
                })
                .collect(),
        })
    }
}

fn process_view(
    session: &Session,
    index: usize,
    payload: Payload,
    store: &IndexStore,
    detector: &DetectorConfig,
    exec: Exec,
) {
    let fail = |msg: String| {
        let mut st = session.lock();
        st.views[index].state = Some(ViewState::Failed);
        st.views[index].error = Some(msg);
        if let FusionMode::Early(kind) = session.spec.mode {
            fold_ready(&mut st, kind);
        }
        session.changed.notify_all();
    };
    let ds = match payload {
        Payload::Descriptors(ds) => ds,
        Payload::Image(img) => match extract(&img, detector) {
            Ok(ds) => ds,
            Err(e) => return fail(e.to_string()),
        },
    };
    let hist = match store.histogram(&ds, exec) {
        Ok(h) => h,
        Err(e) => return fail(e.to_string()),
    };

    let spec = session.spec;
    if let FusionMode::Early(kind) = spec.mode {
        let mut st = session.lock();
        st.views[index].hist = Some(hist);
        st.views[index].state = Some(ViewState::Extracted);
        fold_ready(&mut st, kind);
        session.changed.notify_all();
        return;
    }

    {
        let mut st = session.lock();
        st.views[index].state = Some(ViewState::Extracted);
    }
    let scores = store.view_scores(hist.bins(), spec.similarity, exec);
    let mut st = session.lock();
    match scores {
        Ok(s) => {
            st.views[index].scores = Some(s);
            st.views[index].state = Some(ViewState::Matched);
        }
        Err(e) => {
            st.views[index].state = Some(ViewState::Failed);
            st.views[index].error = Some(e.to_string());
        }
    }
    session.changed.notify_all();
}

/// Folds every ready view that continues the arrival-order prefix. Failed
/// views are skipped so later views are not held back.
fn fold_ready(st: &mut SessionState, kind: EarlyFusionKind) {
    while st.folded < st.views.len() {
        let next = st.folded;
        if st.views[next].state() == ViewState::Failed {
            st.folded += 1;
            continue;
        }
        let Some(h) = st.views[next].hist.take() else { break };
        let running = st.running.get_or_insert_with(|| RunningFusion::new(kind));
        if let Err(e) = running.push(h.bins()) {
            st.views[next].state = Some(ViewState::Failed);
            st.views[next].error = Some(e.to_string());
        } else {
            st.views[next].state = Some(ViewState::Matched);
        }
        st.folded += 1;
    }
}
