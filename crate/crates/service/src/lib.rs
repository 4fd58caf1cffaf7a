//! HTTP service for the human annotation loop.
//!
//! All routes live under `/v1`:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/sessions/{id}/next?strategy=sequential\|random\|uncertainty[&seed=n]` | pop the next token |
//! | POST | `/sessions/{id}/labels` | `{token_id, label, annotator}` |
//! | GET | `/sessions/{id}/progress` | counters |
//! | GET | `/sessions/{id}/audit` | counters checked against a manifest recount |
//! | GET | `/tokens/{id}/audio` | WAV, 16 kHz PCM16, annotation context |
//! | GET | `/tokens/{id}/spectrogram` | dB matrix as JSON |
//!
//! Other paths fall through to the optional static directory (the UI
//! bundle). State sits behind one mutex, so queue pops are atomic and
//! label writes are serialized.

pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use burstkit::audio::{encode_wav_pcm16, extract_clip, spectrogram, AudioError, Spectrogram};
use burstkit::classifier::ClassifierBackend;
use burstkit::dataset::Manifest;
use burstkit::rng;
use burstkit::token::{Burst, LabelSource, StopToken};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

pub use store::{LabelEvent, Store, StoreError};

/// Context served around each token, seconds.
pub const ANNOTATION_CONTEXT: f64 = 0.100;
/// Context used when computing model predictions (the training context).
pub const PREDICTION_CONTEXT: f64 = 0.010;
const PREDICTION_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sequential,
    Random,
    Uncertainty,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub seed: u64,
    pub default_strategy: Strategy,
    pub annotation_context: f64,
    pub prediction_context: f64,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            default_strategy: Strategy::Sequential,
            annotation_context: ANNOTATION_CONTEXT,
            prediction_context: PREDICTION_CONTEXT,
            static_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(serde_json::json!({"error": {"kind": kind, "message": self.to_string()}}))).into_response()
    }
}

#[derive(Debug, Default)]
struct Session {
    /// Token order per (strategy, seed) with a read cursor.
    queues: BTreeMap<(Strategy, u64), (Vec<usize>, usize)>,
    served: u64,
    labeled: u64,
}

#[derive(Debug)]
struct Inner {
    store: Store,
    sessions: HashMap<String, Session>,
    /// Served and not yet labeled: token index -> session.
    open: HashMap<usize, String>,
    /// Every token ever served, and to which session.
    served_by: HashMap<usize, String>,
    /// Incrementally maintained manual label counts.
    counts: BTreeMap<Burst, usize>,
}

impl Inner {
    fn is_done(&self, i: usize) -> bool {
        self.store.manifest().records[i].label_source == LabelSource::Manual
    }

    /// Unlabeled and not excluded upstream.
    fn eligible(r: &StopToken) -> bool {
        !r.excluded && r.label_source != LabelSource::Manual
    }
}

pub struct AppState {
    inner: Mutex<Inner>,
    cfg: ServiceConfig,
    backend: Option<Arc<dyn ClassifierBackend>>,
    predictions: Mutex<Option<Arc<Vec<f64>>>>,
}

impl AppState {
    /// Opens (or seeds) the store at `dir`. Sessions of earlier runs are
    /// rebuilt from the label log: labeled tokens stay labeled and remain
    /// attributed to their session; open assignments are not persisted and
    /// return to the queue.
    pub fn open(
        dir: &Path,
        initial: Option<&Manifest>,
        cfg: ServiceConfig,
        backend: Option<Arc<dyn ClassifierBackend>>,
    ) -> Result<Arc<Self>, StoreError> {
        let store = Store::open(dir, initial)?;
        let mut sessions: HashMap<String, Session> = HashMap::new();
        let mut served_by = HashMap::new();
        for e in store.events() {
            let i = store.position(&e.token_id).expect("replayed events are known");
            if served_by.insert(i, e.session.clone()).is_none() {
                let s = sessions.entry(e.session.clone()).or_default();
                s.served += 1;
                s.labeled += 1;
            }
        }
        let mut counts = BTreeMap::new();
        for r in &store.manifest().records {
            if r.label_source == LabelSource::Manual {
                *counts.entry(r.burst).or_insert(0) += 1;
            }
        }
        let inner = Inner { store, sessions, open: HashMap::new(), served_by, counts };
        Ok(Arc::new(Self { inner: Mutex::new(inner), cfg, backend, predictions: Mutex::new(None) }))
    }

    /// Writes the manifest snapshot.
    pub async fn flush(&self) -> Result<(), StoreError> {
        self.inner.lock().await.store.snapshot()
    }

    pub async fn manifest(&self) -> Manifest {
        self.inner.lock().await.store.manifest().clone()
    }

    /// P(present) per manifest record: stored confidences where present,
    /// otherwise the backend's prediction. Computed once and cached.
    async fn predictions(&self) -> Result<Arc<Vec<f64>>, ApiError> {
        let mut cached = self.predictions.lock().await;
        if let Some(p) = cached.as_ref() {
            return Ok(p.clone());
        }
        let records = self.inner.lock().await.store.manifest().records.clone();
        let backend = self.backend.clone();
        let context = self.cfg.prediction_context;
        let p = tokio::task::spawn_blocking(move || predict_all(&records, backend.as_deref(), context))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
        let p = Arc::new(p);
        *cached = Some(p.clone());
        Ok(p)
    }
}

fn predict_all(records: &[StopToken], backend: Option<&dyn ClassifierBackend>, context: f64) -> Result<Vec<f64>, ApiError> {
    // labeled and excluded tokens are never queued, so they need no prediction
    let mut out: Vec<Option<f64>> =
        records.iter().map(|r| if Inner::eligible(r) { r.confidence } else { Some(f64::NAN) }).collect();
    let missing: Vec<usize> = (0..records.len()).filter(|&i| out[i].is_none()).collect();
    if !missing.is_empty() {
        let backend = backend.ok_or_else(|| {
            ApiError::BadRequest("uncertainty ordering needs predictions: no stored confidences and no model".into())
        })?;
        for chunk in missing.chunks(PREDICTION_BATCH) {
            let clips = chunk
                .iter()
                .map(|&i| {
                    let r = &records[i];
                    extract_clip::<f32>(Path::new(&r.audio_path), r.start, r.end, context)
                        .map(|c| c.clip)
                        .map_err(|e| audio_error(&r.token_id, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let p = backend.classify_batch(&clips).map_err(|e| ApiError::Internal(e.to_string()))?;
            for (&i, p) in chunk.iter().zip(p) {
                out[i] = Some(p);
            }
        }
    }
    Ok(out.into_iter().map(|p| p.expect("filled above")).collect())
}

fn audio_error(token: &str, e: AudioError) -> ApiError {
    match e {
        AudioError::Io { .. } => ApiError::NotFound(format!("audio for token {token}: {e}")),
        other => ApiError::Internal(format!("audio for token {token}: {other}")),
    }
}

fn order(records: &[StopToken], strategy: Strategy, seed: u64, session: &str, predictions: Option<&[f64]>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..records.len()).filter(|&i| Inner::eligible(&records[i])).collect();
    match strategy {
        Strategy::Sequential => {}
        Strategy::Random => idx.shuffle(&mut rng::stream(seed, &format!("service-random/{session}"))),
        Strategy::Uncertainty => {
            let p = predictions.expect("computed before ordering");
            idx.sort_by(|&a, &b| (p[a] - 0.5).abs().total_cmp(&(p[b] - 0.5).abs()).then(a.cmp(&b)));
        }
    }
    idx
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDescriptor {
    pub token_id: String,
    pub corpus: String,
    pub speaker: String,
    pub phone: String,
    pub voicing: String,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<f64>,
    pub audio_url: String,
    pub spectrogram_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextResponse {
    Token { token: TokenDescriptor },
    Empty,
}

async fn next_token(
    State(app): State<Arc<AppState>>,
    UrlPath(session): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextResponse>, ApiError> {
    let strategy = q.strategy.unwrap_or(app.cfg.default_strategy);
    let seed = q.seed.unwrap_or(app.cfg.seed);
    let predictions = if strategy == Strategy::Uncertainty { Some(app.predictions().await?) } else { None };
    let mut guard = app.inner.lock().await;
    let inner = &mut *guard;
    let records = &inner.store.manifest().records;
    let s = inner.sessions.entry(session.clone()).or_default();
    let (queue, cursor) = s
        .queues
        .entry((strategy, seed))
        .or_insert_with(|| (order(records, strategy, seed, &session, predictions.as_deref().map(|p| &p[..])), 0));
    while *cursor < queue.len() {
        let i = queue[*cursor];
        *cursor += 1;
        if records[i].label_source == LabelSource::Manual || inner.open.contains_key(&i) {
            continue;
        }
        inner.open.insert(i, session.clone());
        inner.served_by.insert(i, session.clone());
        s.served += 1;
        let r = &records[i];
        let id = &r.token_id;
        return Ok(Json(NextResponse::Token {
            token: TokenDescriptor {
                token_id: id.clone(),
                corpus: r.corpus.clone(),
                speaker: r.speaker.clone(),
                phone: r.phone.clone(),
                voicing: r.voicing.as_str().to_string(),
                start: r.start,
                end: r.end,
                prediction: predictions.as_ref().map(|p| p[i]),
                audio_url: format!("/v1/tokens/{id}/audio"),
                spectrogram_url: format!("/v1/tokens/{id}/spectrogram"),
            },
        }));
    }
    Ok(Json(NextResponse::Empty))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub token_id: String,
    pub label: String,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub token_id: String,
    pub label: Burst,
    /// `recorded`, `unchanged` (same label again) or `overwritten`.
    pub outcome: String,
    pub seq: Option<u64>,
}

async fn submit_label(
    State(app): State<Arc<AppState>>,
    UrlPath(session): UrlPath<String>,
    Json(req): Json<LabelRequest>,
) -> Result<Json<LabelAck>, ApiError> {
    let label = match req.label.as_str() {
        "present" => Burst::Present,
        "absent" => Burst::Absent,
        "unsure" => Burst::Unsure,
        other => return Err(ApiError::BadRequest(format!("label must be present, absent or unsure, got {other:?}"))),
    };
    let mut guard = app.inner.lock().await;
    let inner = &mut *guard;
    let i = inner.store.position(&req.token_id).ok_or_else(|| ApiError::NotFound(format!("unknown token {}", req.token_id)))?;
    if inner.served_by.get(&i) != Some(&session) {
        return Err(ApiError::Conflict(format!("token {} was not served to session {session}", req.token_id)));
    }
    let r = &inner.store.manifest().records[i];
    let previous = (r.label_source == LabelSource::Manual).then_some(r.burst);
    if previous == Some(label) {
        return Ok(Json(LabelAck { token_id: req.token_id, label, outcome: "unchanged".into(), seq: None }));
    }
    let seq = inner.store.next_seq();
    inner.store.record(LabelEvent {
        seq,
        session: session.clone(),
        token_id: req.token_id.clone(),
        label,
        annotator: req.annotator,
        previous,
    })?;
    inner.open.remove(&i);
    if let Some(p) = previous {
        *inner.counts.entry(p).or_insert(0) -= 1;
    } else {
        inner.sessions.entry(session).or_default().labeled += 1;
    }
    *inner.counts.entry(label).or_insert(0) += 1;
    let outcome = if previous.is_some() { "overwritten" } else { "recorded" };
    Ok(Json(LabelAck { token_id: req.token_id, label, outcome: outcome.into(), seq: Some(seq) }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub total: usize,
    pub labeled: usize,
    pub present: usize,
    pub absent: usize,
    pub unsure: usize,
    /// Served, awaiting a label (all sessions).
    pub open: usize,
    pub unseen: usize,
    pub session_served: u64,
    pub session_labeled: u64,
}

fn progress_of(inner: &Inner, session: &str) -> Progress {
    let count = |b| inner.counts.get(&b).copied().unwrap_or(0);
    let records = &inner.store.manifest().records;
    let labeled = count(Burst::Present) + count(Burst::Absent) + count(Burst::Unsure);
    let total = records.iter().filter(|r| Inner::eligible(r)).count() + labeled;
    let s = inner.sessions.get(session);
    Progress {
        session_id: session.to_string(),
        total,
        labeled,
        present: count(Burst::Present),
        absent: count(Burst::Absent),
        unsure: count(Burst::Unsure),
        open: inner.open.len(),
        unseen: total - labeled - inner.open.len(),
        session_served: s.map_or(0, |s| s.served),
        session_labeled: s.map_or(0, |s| s.labeled),
    }
}

async fn progress(State(app): State<Arc<AppState>>, UrlPath(session): UrlPath<String>) -> Json<Progress> {
    Json(progress_of(&*app.inner.lock().await, &session))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub progress: Progress,
    /// Manual labels recounted from the manifest records.
    pub recount: BTreeMap<String, usize>,
    /// Labels replayed from the log, last write per token.
    pub log_recount: BTreeMap<String, usize>,
    pub log_events: usize,
    /// Open assignments that are already labeled (must be zero).
    pub open_and_labeled: usize,
    pub consistent: bool,
}

async fn audit(State(app): State<Arc<AppState>>, UrlPath(session): UrlPath<String>) -> Json<Audit> {
    let inner = app.inner.lock().await;
    let p = progress_of(&inner, &session);
    let mut recount: BTreeMap<String, usize> = BTreeMap::new();
    for r in inner.store.manifest().records.iter().filter(|r| r.label_source == LabelSource::Manual) {
        *recount.entry(r.burst.to_string()).or_default() += 1;
    }
    let mut last: BTreeMap<&str, Burst> = BTreeMap::new();
    for e in inner.store.events() {
        last.insert(&e.token_id, e.label);
    }
    let mut log_recount: BTreeMap<String, usize> = BTreeMap::new();
    for b in last.values() {
        *log_recount.entry(b.to_string()).or_default() += 1;
    }
    let open_and_labeled = inner.open.keys().filter(|&&i| inner.is_done(i)).count();
    let reported: BTreeMap<String, usize> = [("present", p.present), ("absent", p.absent), ("unsure", p.unsure)]
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(k, n)| (k.to_string(), n))
        .collect();
    let consistent = reported == recount && recount == log_recount && open_and_labeled == 0;
    Json(Audit { progress: p, recount, log_recount, log_events: inner.store.events().len(), open_and_labeled, consistent })
}

async fn token_clip(app: &AppState, token: &str) -> Result<burstkit::audio::AudioClip<f32>, ApiError> {
    let r = {
        let inner = app.inner.lock().await;
        let i = inner.store.position(token).ok_or_else(|| ApiError::NotFound(format!("unknown token {token}")))?;
        inner.store.manifest().records[i].clone()
    };
    let context = app.cfg.annotation_context;
    let token = token.to_string();
    tokio::task::spawn_blocking(move || {
        extract_clip::<f32>(Path::new(&r.audio_path), r.start, r.end, context).map(|c| c.clip).map_err(|e| audio_error(&token, e))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn token_audio(State(app): State<Arc<AppState>>, UrlPath(token): UrlPath<String>) -> Result<Response, ApiError> {
    let clip = token_clip(&app, &token).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], encode_wav_pcm16(&clip)).into_response())
}

async fn token_spectrogram(
    State(app): State<Arc<AppState>>,
    UrlPath(token): UrlPath<String>,
) -> Result<Json<Spectrogram>, ApiError> {
    let clip = token_clip(&app, &token).await?;
    Ok(Json(spectrogram(&clip)))
}

pub fn router(app: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions/{id}/next", get(next_token))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/sessions/{id}/progress", get(progress))
        .route("/sessions/{id}/audit", get(audit))
        .route("/tokens/{id}/audio", get(token_audio))
        .route("/tokens/{id}/spectrogram", get(token_spectrogram));
    let mut r = Router::new().nest("/v1", api);
    if let Some(dir) = &app.cfg.static_dir {
        r = r.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    r.with_state(app)
}

/// Serves until Ctrl-C, then writes a final snapshot.
pub async fn serve(listener: tokio::net::TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    app.flush().await.map_err(std::io::Error::other)
}
