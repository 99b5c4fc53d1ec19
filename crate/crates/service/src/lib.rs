//! HTTP ingestion and analysis service.
//!
//! | method | path                              | result |
//! |--------|-----------------------------------|--------|
//! | POST   | `/api/v1/events/{plane}`          | 202 parse report |
//! | POST   | `/api/v1/report`                  | 201 `{fco_id}` |
//! | GET    | `/api/v1/fco`                     | FCO index |
//! | GET    | `/api/v1/fco/{id}`                | sanitized FCO |
//! | GET    | `/api/v1/fco/{id}/explanations`   | both explanations |
//! | GET    | `/healthz`                        | 200 |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use faultline_core::config::{Config, ConfigError, ServiceSettings};
use faultline_core::contract::load_spec;
use faultline_core::ingest::{parse_har, parse_server_log_line, parse_wire_event, ParseReport};
use faultline_core::model::{
    CorrelationId, FailureContextObject, FailureReport, Plane, TelemetryEvent, TriggerKind,
};
use faultline_core::store::{EventStore, StoreError};
use faultline_core::{Engine, RootCauseClass};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load API specification: {0}")]
    Spec(String),
    #[error("cannot open event store: {0}")]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

/// Completed FCOs, kept in memory in creation order.
#[derive(Default)]
struct FcoRegistry {
    by_id: HashMap<String, Arc<FailureContextObject>>,
    order: Vec<String>,
}

pub struct AppState {
    store: EventStore,
    engine: Engine,
    fcos: RwLock<FcoRegistry>,
    /// Last auto-trigger time per correlation id (untagged events share one slot).
    debounce: Mutex<HashMap<Option<CorrelationId>, i64>>,
    auto_trigger: bool,
    debounce_ms: i64,
}

impl AppState {
    pub fn new(store: EventStore, engine: Engine, settings: &ServiceSettings) -> Self {
        Self {
            store,
            engine,
            fcos: RwLock::new(FcoRegistry::default()),
            debounce: Mutex::new(HashMap::new()),
            auto_trigger: settings.auto_trigger,
            debounce_ms: settings.debounce_ms,
        }
    }

    /// Validates the settings, then loads the spec and opens the store.
    pub fn from_config(config: &Config) -> Result<Self, ServiceError> {
        config.service.validate()?;
        let spec = match &config.service.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Spec(e.to_string()))?;
                let loaded = load_spec(&text).map_err(|e| ServiceError::Spec(e.to_string()))?;
                for w in &loaded.warnings {
                    tracing::warn!(warning = %w, "spec");
                }
                Some(loaded.spec)
            }
            None => None,
        };
        let engine = Engine::from_config(config, spec)?;
        let store = match &config.service.store {
            Some(path) => EventStore::open(path)?,
            None => EventStore::in_memory(),
        };
        Ok(Self::new(store, engine, &config.service))
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn fco(&self, id: &str) -> Option<Arc<FailureContextObject>> {
        self.fcos.read().by_id.get(id).cloned()
    }

    pub fn fco_count(&self) -> usize {
        self.fcos.read().order.len()
    }

    fn run_pipeline(&self, report: FailureReport) -> Result<Arc<FailureContextObject>, String> {
        let fco = Arc::new(self.engine.run(&self.store, report).map_err(|e| e.to_string())?);
        let mut reg = self.fcos.write();
        reg.order.push(fco.fco_id.clone());
        reg.by_id.insert(fco.fco_id.clone(), fco.clone());
        Ok(fco)
    }

    /// Claims the debounce slot for `cid` at `ts`; false while the previous
    /// trigger for the same id is still within the debounce window.
    fn claim_trigger(&self, cid: &Option<CorrelationId>, ts: i64) -> bool {
        let mut slots = self.debounce.lock();
        match slots.get(cid) {
            Some(last) if (ts - *last).abs() < self.debounce_ms => false,
            _ => {
                slots.insert(cid.clone(), ts);
                true
            }
        }
    }

    /// Runs the pipeline for every stored 4xx/5xx network event, subject to
    /// the per-id debounce. Returns the created FCO ids.
    fn auto_trigger(&self, stored: &[TelemetryEvent]) -> Vec<String> {
        if !self.auto_trigger {
            return Vec::new();
        }
        let mut created = Vec::new();
        for e in stored {
            let Some(net) = e.network() else { continue };
            if !net.is_error_status() || !self.claim_trigger(&e.correlation_id, e.timestamp_ms) {
                continue;
            }
            let report = FailureReport::auto_status(e.timestamp_ms, net.status, e.correlation_id.clone());
            match self.run_pipeline(report) {
                Ok(fco) => created.push(fco.fco_id.clone()),
                Err(err) => tracing::error!(%err, "auto-trigger pipeline failed"),
            }
        }
        created
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/events/{plane}", post(ingest))
        .route("/api/v1/report", post(report))
        .route("/api/v1/fco", get(list_fcos))
        .route("/api/v1/fco/{id}", get(get_fco))
        .route("/api/v1/fco/{id}/explanations", get(get_explanations))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "events": state.store.len(), "fcos": state.fco_count()}))
}

/// One decoded unit of an ingest body, with its line index.
enum Unit {
    Json(usize, Value),
    Invalid(usize, String),
    Text(usize, String),
}

/// Splits a body into JSON documents: a single object, an array, or JSONL.
/// Returns `None` when nothing in it decodes as JSON.
fn decode_body(text: &str) -> Option<Vec<Unit>> {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return match v {
            Value::Array(items) => Some(items.into_iter().enumerate().map(|(i, d)| Unit::Json(i, d)).collect()),
            other => Some(vec![Unit::Json(0, other)]),
        };
    }
    let mut units = Vec::new();
    let mut any_json = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(v) => {
                any_json = true;
                units.push(Unit::Json(i, v));
            }
            Err(e) if line.trim_start().starts_with('{') || line.trim_start().starts_with('[') => {
                units.push(Unit::Invalid(i, format!("malformed JSON: {e}")))
            }
            Err(_) => units.push(Unit::Text(i, line.to_string())),
        }
    }
    any_json.then_some(units)
}

#[derive(Serialize, Deserialize)]
pub struct IngestResponse {
    #[serde(flatten)]
    pub report: ParseReport,
    /// FCOs created by the auto-trigger for this batch.
    pub triggered: Vec<String>,
}

fn parse_units(plane: Plane, units: Vec<Unit>, state: &AppState) -> (Vec<TelemetryEvent>, ParseReport) {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for unit in units {
        let parsed = match unit {
            Unit::Invalid(i, reason) => Err((i, reason)),
            Unit::Text(i, line) if plane == Plane::Server => parse_server_log_line(&line).map_err(|r| (i, r)),
            Unit::Text(i, _) => Err((i, "not a JSON document".to_string())),
            Unit::Json(i, doc) if plane == Plane::Network && doc.get("log").is_some() => {
                match parse_har(&doc, None, state.engine.ingest_options()) {
                    Ok((evs, r)) => {
                        events.extend(evs);
                        report.merge(r);
                        continue;
                    }
                    Err(e) => Err((i, e.to_string())),
                }
            }
            Unit::Json(i, doc) if plane == Plane::Server => {
                if doc.get("plane").is_some() {
                    parse_wire_event(&doc, plane).map_err(|r| (i, r))
                } else {
                    parse_server_log_line(&doc.to_string()).map_err(|r| (i, r))
                }
            }
            Unit::Json(i, doc) => parse_wire_event(&doc, plane).map_err(|r| (i, r)),
        };
        match parsed {
            Ok(e) => {
                report.accept();
                events.push(e);
            }
            Err((i, reason)) => report.reject(i, reason),
        }
    }
    (events, report)
}

async fn ingest(State(state): State<Arc<AppState>>, Path(plane): Path<String>, body: Bytes) -> Response {
    let plane: Plane = match plane.parse() {
        Ok(p) => p,
        Err(_) => return error(StatusCode::NOT_FOUND, format!("unknown plane `{plane}`")),
    };
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not UTF-8");
    };
    let units = match decode_body(text) {
        Some(u) => u,
        // plain-text server logs are a valid body as long as one line parses
        None if plane == Plane::Server => {
            let units: Vec<Unit> = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| Unit::Text(i, l.to_string()))
                .collect();
            if !units.iter().any(|u| matches!(u, Unit::Text(_, l) if parse_server_log_line(l).is_ok())) {
                return error(StatusCode::BAD_REQUEST, "body contains no decodable log line");
            }
            units
        }
        None => return error(StatusCode::BAD_REQUEST, "body is not JSON or JSONL"),
    };
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let (events, report) = parse_units(plane, units, &worker);
        let ids = worker.store.append_batch(events.clone())?;
        let stored: Vec<TelemetryEvent> = events
            .into_iter()
            .zip(ids)
            .map(|(mut e, id)| {
                e.event_id = id;
                e
            })
            .collect();
        let triggered = worker.auto_trigger(&stored);
        Ok::<_, StoreError>(IngestResponse { report, triggered })
    })
    .await;
    match result {
        Ok(Ok(resp)) => (StatusCode::ACCEPTED, Json(resp)).into_response(),
        Ok(Err(e)) => {
            tracing::error!(error = %e, "append failed");
            error(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Client-supplied report fields; omitted ids are generated.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRequest {
    report_id: Option<String>,
    failure_time_ms: i64,
    #[serde(default = "manual")]
    trigger: TriggerKind,
    triggering_status: Option<u16>,
    correlation_id: Option<CorrelationId>,
    session_id: Option<String>,
}

fn manual() -> TriggerKind {
    TriggerKind::Manual
}

async fn report(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let doc: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("body is not JSON: {e}")),
    };
    let req: ReportRequest = match serde_json::from_value(doc) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let report = FailureReport {
        report_id: req.report_id.unwrap_or_else(faultline_core::model::new_id),
        failure_time_ms: req.failure_time_ms,
        trigger: req.trigger,
        triggering_status: req.triggering_status,
        correlation_id: req.correlation_id,
        session_id: req.session_id,
    };
    if let Err(e) = report.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    let worker = state.clone();
    match tokio::task::spawn_blocking(move || worker.run_pipeline(report)).await {
        Ok(Ok(fco)) => (
            StatusCode::CREATED,
            Json(json!({"fco_id": fco.fco_id, "root_cause": fco.root_cause})),
        )
            .into_response(),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Serialize, Deserialize)]
pub struct FcoSummary {
    pub fco_id: String,
    pub failure_time_ms: i64,
    pub trigger: TriggerKind,
    pub root_cause: RootCauseClass,
    pub events: usize,
}

async fn list_fcos(State(state): State<Arc<AppState>>) -> Json<Vec<FcoSummary>> {
    let reg = state.fcos.read();
    Json(
        reg.order
            .iter()
            .map(|id| {
                let f = &reg.by_id[id];
                FcoSummary {
                    fco_id: f.fco_id.clone(),
                    failure_time_ms: f.report.failure_time_ms,
                    trigger: f.report.trigger,
                    root_cause: f.root_cause,
                    events: f.events.len(),
                }
            })
            .collect(),
    )
}

async fn get_fco(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.fco(&id) {
        Some(f) => Json(f.as_ref()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown fco `{id}`")),
    }
}

async fn get_explanations(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.fco(&id) {
        Some(f) => Json(json!({"fco_id": f.fco_id, "explanations": f.explanations})).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown fco `{id}`")),
    }
}

/// Validates the configuration, binds, and serves until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let addr = format!("{}:{}", config.service.bind, config.service.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    let local: SocketAddr = listener.local_addr()?;
    tracing::info!(%local, events = state.store.len(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
