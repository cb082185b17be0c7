//! HTTP front end: per-client sessions over one immutable table.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use queuelens_core::config::{resolve_over, ConfigDocument, ConfigError};
use queuelens_core::export::{render, retrieve_selected_records, ExportFormat};
use queuelens_core::selection::{describe, selected_count, update_state, SelectionError};
use queuelens_core::stats::queue_summaries;
use queuelens_core::time::format_timestamp;
use queuelens_core::views::{conditional_y_histogram, facet_views, FacetedViews, ViewError};
use queuelens_core::{EncodingConfig, JobTable, Mutation, SessionState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(3600);
const VIEW_CACHE_CAPACITY: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub table_id: String,
    pub idle_timeout: Duration,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions { table_id: "table".into(), idle_timeout: DEFAULT_IDLE_TIMEOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub config_hash: String,
    pub table_id: String,
    pub created_at: String,
    pub revision: u64,
}

struct Session {
    handle: SessionHandle,
    state: SessionState,
    last_used: Instant,
}

/// Tiny LRU: most recently used entries sit at the back.
struct ViewCache {
    entries: IndexMap<String, Arc<FacetedViews>>,
    capacity: usize,
}

impl ViewCache {
    fn get(&mut self, key: &str) -> Option<Arc<FacetedViews>> {
        let (k, v) = self.entries.shift_remove_entry(key)?;
        self.entries.insert(k, Arc::clone(&v));
        Some(v)
    }

    fn put(&mut self, key: String, views: Arc<FacetedViews>) {
        self.entries.shift_remove(&key);
        self.entries.insert(key, views);
        while self.entries.len() > self.capacity {
            self.entries.shift_remove_index(0);
        }
    }
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    table: Arc<JobTable>,
    base_config: EncodingConfig,
    options: ServiceOptions,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    cache: Mutex<ViewCache>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(table: Arc<JobTable>, base_config: EncodingConfig, options: ServiceOptions) -> Self {
        AppState {
            inner: Arc::new(Inner {
                table,
                base_config,
                options,
                sessions: Mutex::new(HashMap::new()),
                cache: Mutex::new(ViewCache { entries: IndexMap::new(), capacity: VIEW_CACHE_CAPACITY }),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().unwrap().len()
    }

    /// Drops sessions idle for longer than the configured timeout.
    pub fn expire_idle(&self) -> usize {
        let ttl = self.inner.options.idle_timeout;
        let mut sessions = self.inner.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.try_lock().map_or(true, |s| s.last_used.elapsed() <= ttl));
        before - sessions.len()
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    /// Views for a state, from the cache when an identical state was seen.
    async fn views_for(&self, state: &SessionState) -> Result<Arc<FacetedViews>, ApiError> {
        let key = cache_key(state);
        if let Some(v) = self.inner.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let table = Arc::clone(&self.inner.table);
        let state = state.clone();
        let views = tokio::task::spawn_blocking(move || facet_views(&table, state.config(), state.filter(), state.selection()))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
        let views = Arc::new(views);
        self.inner.cache.lock().unwrap().put(key, Arc::clone(&views));
        Ok(views)
    }
}

/// Everything the rendered views depend on besides the table.
fn cache_key(state: &SessionState) -> String {
    let filter = serde_json::to_string(state.filter()).expect("serializable");
    let brushes = serde_json::to_string(state.brushes()).expect("serializable");
    format!("{}|{}|{}", state.config().hash(), filter, brushes)
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("revision {requested} is ahead of the session (at {current})")]
    FutureRevision { requested: u64, current: u64 },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Config(_) | ApiError::Selection(_) | ApiError::View(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::FutureRevision { .. } => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Config(_) => "config",
            ApiError::Selection(_) => "selection",
            ApiError::View(_) => "view",
            ApiError::FutureRevision { .. } => "future_revision",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/summary", get(summary))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/views", get(get_views))
        .route("/sessions/{id}/mutations", post(post_mutation))
        .route("/sessions/{id}/conditional", get(get_conditional))
        .route("/sessions/{id}/selected_count", get(get_selected_count))
        .route("/sessions/{id}/export", get(get_export))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted, sweeping idle sessions.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let sweeper = state.clone();
    let period = sweeper.inner.options.idle_timeout.min(Duration::from_secs(60)).max(Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = sweeper.expire_idle();
            if n > 0 {
                log::info!("expired {n} idle session(s)");
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_json(body: &Bytes) -> Result<Value, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Null);
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn config_overlay(base: &EncodingConfig, value: &Value) -> Result<EncodingConfig, ApiError> {
    let doc = ConfigDocument::from_json(value)?;
    Ok(resolve_over(base.clone(), &doc, &queuelens_core::model::Schema::jobs())?)
}

fn now_epoch() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

async fn summary(State(app): State<AppState>) -> Json<Value> {
    let table = &app.inner.table;
    Json(json!({ "table_id": app.inner.options.table_id, "records": table.len(), "queues": queue_summaries(table) }))
}

/// Body, if any: `{"config": {...}}` overriding the service's base config.
async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<SessionHandle>), ApiError> {
    let body = parse_json(&body)?;
    let config = match body.get("config") {
        Some(c) => config_overlay(&app.inner.base_config, c)?,
        None => app.inner.base_config.clone(),
    };
    let n = app.inner.next_id.fetch_add(1, Ordering::Relaxed);
    let handle = SessionHandle {
        session_id: format!("s{n:08x}"),
        config_hash: config.hash(),
        table_id: app.inner.options.table_id.clone(),
        created_at: format_timestamp(now_epoch()),
        revision: 0,
    };
    let state = SessionState::new(&app.inner.table, config);
    let session = Session { handle: handle.clone(), state, last_used: Instant::now() };
    app.inner
        .sessions
        .lock()
        .unwrap()
        .insert(handle.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    log::debug!("created session {}", handle.session_id);
    Ok((StatusCode::CREATED, Json(handle)))
}

/// Locks a live session, refreshing its idle clock. Expired sessions are
/// removed and reported as unknown.
async fn lock_session(app: &AppState, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Session>, ApiError> {
    let session = app.session(id)?.lock_owned().await;
    if session.last_used.elapsed() > app.inner.options.idle_timeout {
        app.inner.sessions.lock().unwrap().remove(id);
        return Err(ApiError::UnknownSession(id.to_string()));
    }
    Ok(session)
}

fn touch(session: &mut Session) {
    session.last_used = Instant::now();
    session.handle.revision = session.state.revision();
    session.handle.config_hash = session.state.config().hash();
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    Ok(Json(json!({
        "handle": s.handle,
        "selection": describe(&s.state),
        "selected": s.state.selection().len(),
        "config": s.state.config(),
    })))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.inner.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::UnknownSession(id)),
    }
}

#[derive(Debug, Deserialize)]
struct RevisionQuery {
    revision: Option<u64>,
}

/// Views always reflect the session's current revision. A request for an
/// older revision is answered with the current one and labeled stale.
async fn get_views(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RevisionQuery>,
) -> Result<Json<Value>, ApiError> {
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    let current = s.state.revision();
    if let Some(requested) = q.revision.filter(|&r| r > current) {
        return Err(ApiError::FutureRevision { requested, current });
    }
    let views = app.views_for(&s.state).await?;
    Ok(Json(json!({
        "session_id": id,
        "revision": current,
        "requested_revision": q.revision.unwrap_or(current),
        "stale": q.revision.is_some_and(|r| r < current),
        "config_hash": s.state.config().hash(),
        "views": &*views,
    })))
}

/// Decodes a mutation message. `set_encoding` carries a partial config
/// document overlaid on the session's current config.
pub fn parse_mutation(value: &Value, current: &EncodingConfig) -> Result<Mutation, ApiError> {
    if value.get("op").and_then(Value::as_str) == Some("set_encoding") {
        let doc = value
            .get("config")
            .ok_or_else(|| ApiError::BadRequest("set_encoding needs a \"config\" object".into()))?;
        return Ok(Mutation::SetEncoding { config: config_overlay(current, doc)? });
    }
    serde_json::from_value(value.clone()).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn post_mutation(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let value = parse_json(&body)?;
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    let mutation = parse_mutation(&value, s.state.config())?;
    let next = update_state(&app.inner.table, &s.state, &mutation)?;
    s.state = next;
    touch(&mut s);
    Ok(Json(json!({
        "session_id": id,
        "revision": s.state.revision(),
        "config_hash": s.state.config().hash(),
        "selected": s.state.selection().len(),
        "selection": describe(&s.state),
    })))
}

#[derive(Debug, Deserialize)]
struct ConditionalQuery {
    facet: String,
    column: usize,
}

async fn get_conditional(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ConditionalQuery>,
) -> Result<Json<Value>, ApiError> {
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    let views = app.views_for(&s.state).await?;
    let bundle = views.bundle(&q.facet).ok_or_else(|| ViewError::UnknownFacet(q.facet.clone()))?;
    let histogram = conditional_y_histogram(&bundle.grid, q.column)?;
    Ok(Json(json!({
        "revision": s.state.revision(),
        "facet": q.facet,
        "column": q.column,
        "histogram": histogram,
    })))
}

#[derive(Debug, Deserialize)]
struct FacetQuery {
    facet: String,
}

async fn get_selected_count(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FacetQuery>,
) -> Result<Json<Value>, ApiError> {
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    let n = selected_count(&s.state, &q.facet)?;
    Ok(Json(json!({ "revision": s.state.revision(), "facet": q.facet, "selected_count": n })))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn get_export(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse().map_err(ApiError::BadRequest)?;
    let mut s = lock_session(&app, &id).await?;
    touch(&mut s);
    let doc = retrieve_selected_records(&app.inner.table, &s.state);
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok((
        [(header::CONTENT_TYPE, content_type.to_string()), (header::HeaderName::from_static("x-revision"), s.state.revision().to_string())],
        render(&doc, format),
    )
        .into_response())
}
