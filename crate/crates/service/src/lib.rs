//! HTTP front end for interactive labelling sessions.
//!
//! A session wraps one resumable run: humans fetch the pending queue, submit
//! labels, and advance the run through its phases. With a truth file
//! attached (simulation mode) the service can also answer queues itself.

mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use labelopt_core::io::{self, IoError};
use labelopt_core::model::{Dataset, Element, LabelAlphabet, LabelId, ModelError};
use labelopt_core::pipeline::{AlConfig, OpalConfig, OpalRun, Phase, PipelineError, Progress};
use labelopt_core::report::RunReport;
use serde::{Deserialize, Serialize};

pub use store::{Session, Store};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Ground truth by element id; enables simulation mode.
    pub truth: Option<HashMap<String, String>>,
    /// Run optimization steps in the background instead of inside the request.
    pub background: bool,
}

struct Inner {
    store: Store,
    truth: Option<HashMap<String, String>>,
    background: bool,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(cfg: ServiceConfig) -> std::io::Result<Self> {
        Ok(Self(Arc::new(Inner {
            store: Store::open(&cfg.data_dir)?,
            truth: cfg.truth,
            background: cfg.background,
        })))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }
}

/// Reads a truth file in dataset format (`id,truth,payload_uri`).
pub fn read_truth(path: &Path) -> Result<HashMap<String, String>, IoError> {
    let rows = io::read_file(path, io::read_dataset_rows)?;
    Ok(rows
        .into_iter()
        .filter_map(|(id, truth, _)| Some((id, truth?)))
        .collect())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "session is optimizing")
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::UnknownId(_) => StatusCode::NOT_FOUND,
            PipelineError::Conflict { .. }
            | PipelineError::QueueNotEmpty(_)
            | PipelineError::AlreadyDone
            | PipelineError::NotDone => StatusCode::CONFLICT,
            PipelineError::Oracle(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl From<IoError> for ApiError {
    fn from(e: IoError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("persisting session: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub config: OpalConfig,
    #[serde(default)]
    pub active_learning: bool,
    /// Per-round human budget; implies active learning.
    #[serde(default)]
    pub beta: Option<usize>,
    pub dataset: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    /// Label tokens in order; derived from known truth when absent.
    #[serde(default)]
    pub alphabet: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub phase: Phase,
    pub pending: usize,
    pub size: usize,
    pub alphabet: Vec<String>,
    pub beta: Option<usize>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub payload_uri: Option<String>,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueView {
    pub remaining: usize,
    pub alphabet: Vec<String>,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPair {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitLabels {
    pub labels: Vec<LabelPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub session: String,
    #[serde(flatten)]
    pub progress: Progress,
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(show_session))
        .route("/sessions/{id}/queue", get(show_queue))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/autolabel", post(autolabel))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn session(state: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    state.store().get(id).ok_or_else(|| ApiError::not_found(id))
}

fn view(s: &Session) -> SessionView {
    let run = s.run();
    SessionView {
        id: s.id.clone(),
        phase: if s.optimizing() { Phase::Optimizing } else { run.phase() },
        pending: run.queue().len(),
        size: s.dataset.len(),
        alphabet: s.dataset.alphabet().labels().to_vec(),
        beta: run.beta(),
        last_error: s.last_error(),
    }
}

fn load_dataset(req: &CreateSession, truth: Option<&HashMap<String, String>>) -> ApiResult<Dataset> {
    let rows = io::read_file(&req.dataset, io::read_dataset_rows)?;
    let alphabet = match &req.alphabet {
        Some(labels) => LabelAlphabet::new(labels.clone())?,
        None => {
            let known = match truth {
                Some(t) => rows.iter().filter_map(|r| t.get(&r.0).cloned()).collect::<Vec<_>>(),
                None => rows.iter().filter_map(|r| r.1.clone()).collect(),
            };
            LabelAlphabet::from_tokens(known)?
        }
    };
    let mut features = req
        .features
        .as_deref()
        .map(|p| io::read_file(p, io::read_features))
        .transpose()?;
    let mut elements = Vec::with_capacity(rows.len());
    for (id, _, payload) in rows {
        let mut e = Element::new(id);
        e.payload_uri = payload;
        // Truth is only attached in simulation mode.
        if let Some(t) = truth.and_then(|t| t.get(&e.id)) {
            e.truth = Some(alphabet.id(t)?);
        }
        if let Some(f) = features.as_mut() {
            let v = f.remove(&e.id).ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!("no feature row for element `{}`", e.id),
                )
            })?;
            e.features = Some(v);
        }
        elements.push(e);
    }
    Ok(Dataset::new(elements, alphabet)?)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let st = state.clone();
    let s = blocking(move || -> ApiResult<Arc<Session>> {
        let dataset = load_dataset(&req, st.0.truth.as_ref())?;
        let run = if req.active_learning || req.beta.is_some() {
            let mut cfg = AlConfig::new(req.config);
            if let Some(b) = req.beta {
                cfg.beta = b;
            }
            OpalRun::start_al(&dataset, cfg)?
        } else {
            OpalRun::start(&dataset, req.config)?
        };
        let id = format!("{:016x}", rand::random::<u64>());
        Ok(st.store().insert(id, dataset, run)?)
    })
    .await??;
    log::info!("created session {}", s.id);
    Ok((StatusCode::CREATED, Json(view(&s))))
}

async fn show_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    let s = session(&state, &id)?;
    Ok(Json(view(&s)))
}

async fn show_queue(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<QueueParams>,
) -> ApiResult<Json<QueueView>> {
    let s = session(&state, &id)?;
    let run = s.run();
    let limit = params.limit.unwrap_or(usize::MAX);
    let items = run
        .queue()
        .iter()
        .take(limit)
        .enumerate()
        .map(|(k, id)| QueueItem {
            id: id.clone(),
            payload_uri: s
                .dataset
                .position(id)
                .and_then(|p| s.dataset.element(p).payload_uri.clone()),
            position: k + 1,
        })
        .collect();
    Ok(Json(QueueView {
        remaining: run.queue().len(),
        alphabet: s.dataset.alphabet().labels().to_vec(),
        items,
    }))
}

/// Applies `f` to a copy of the run under the session's writer lock, then
/// persists and publishes the copy.
async fn mutate<T>(
    state: &AppState,
    s: &Session,
    f: impl FnOnce(&mut OpalRun) -> Result<T, PipelineError>,
) -> ApiResult<T> {
    if s.optimizing() {
        return Err(ApiError::busy());
    }
    let _guard = s.writer.lock().await;
    if s.optimizing() {
        return Err(ApiError::busy());
    }
    let mut run = (*s.run()).clone();
    let out = f(&mut run)?;
    state.store().persist(&s.id, &run)?;
    s.replace(run);
    Ok(out)
}

fn parse_pairs(dataset: &Dataset, labels: &[LabelPair]) -> ApiResult<Vec<(String, LabelId)>> {
    labels
        .iter()
        .map(|p| Ok((p.id.clone(), dataset.alphabet().id(&p.label)?)))
        .collect()
}

async fn submit_labels(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SubmitLabels>,
) -> ApiResult<Json<SubmitResult>> {
    let s = session(&state, &id)?;
    let pairs = parse_pairs(&s.dataset, &req.labels)?;
    let dataset = s.dataset.clone();
    let remaining = mutate(&state, &s, |run| run.submit(&dataset, &pairs)).await?;
    Ok(Json(SubmitResult { remaining }))
}

async fn autolabel(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SubmitResult>> {
    if state.0.truth.is_none() {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "answering from truth requires simulation mode",
        ));
    }
    let s = session(&state, &id)?;
    let dataset = s.dataset.clone();
    let remaining = mutate(&state, &s, |run| {
        let pairs = run
            .queue()
            .iter()
            .map(|id| {
                let truth = dataset
                    .position(id)
                    .and_then(|p| dataset.element(p).truth)
                    .ok_or_else(|| PipelineError::Oracle(id.clone()))?;
                Ok((id.clone(), truth))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        run.submit(&dataset, &pairs)
    })
    .await?;
    Ok(Json(SubmitResult { remaining }))
}

async fn advance(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = session(&state, &id)?;
    if s.optimizing() {
        return Err(ApiError::busy());
    }
    let guard = s.writer.clone().lock_owned().await;
    if s.optimizing() {
        return Err(ApiError::busy());
    }
    let current = s.run();
    match current.phase() {
        Phase::Done => return Err(PipelineError::AlreadyDone.into()),
        _ if !current.queue().is_empty() => return Err(PipelineError::QueueNotEmpty(current.queue().len()).into()),
        _ => {}
    }
    let solves = matches!(
        current.phase(),
        Phase::AwaitingInitialLabels | Phase::AwaitingIterationLabels(_) | Phase::Optimizing
    );
    let step = {
        let s = s.clone();
        let state = state.clone();
        move || -> Result<(), ApiError> {
            let mut run = (*s.run()).clone();
            run.advance(&s.dataset)?;
            state.store().persist(&s.id, &run)?;
            s.replace(run);
            Ok(())
        }
    };

    if state.0.background && solves {
        s.set_optimizing(true);
        s.set_last_error(None);
        let bg = s.clone();
        tokio::spawn(async move {
            let outcome = tokio::task::spawn_blocking(step).await;
            let error = match outcome {
                Ok(Ok(())) => None,
                Ok(Err(e)) => Some(e.message),
                Err(e) => Some(e.to_string()),
            };
            if let Some(e) = &error {
                log::warn!("session {}: optimization failed: {e}", bg.id);
            }
            bg.set_last_error(error);
            bg.set_optimizing(false);
            drop(guard);
        });
        return Ok((StatusCode::ACCEPTED, Json(view(&s))).into_response());
    }

    let result = blocking(step).await?;
    drop(guard);
    result?;
    Ok(Json(view(&s)).into_response())
}

async fn metrics(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<MetricsView>> {
    let s = session(&state, &id)?;
    let mut progress = s.run().progress(&s.dataset);
    if s.optimizing() {
        progress.phase = Phase::Optimizing;
    }
    Ok(Json(MetricsView {
        session: s.id.clone(),
        progress,
    }))
}

async fn report(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RunReport>> {
    let s = session(&state, &id)?;
    Ok(Json(s.run().report(&s.dataset)?))
}
