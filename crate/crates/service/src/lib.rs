//! HTTP service over a loaded task: `POST /classify`, `GET /stats`,
//! `GET /healthz`.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use triage_core::llm::LlmBackend;
use triage_core::router::{route_one, BatchStats, CostModel, RoutingConfig, Tier};
use triage_core::store::EmbeddingVector;
use triage_core::workspace::LoadedTask;
use triage_core::Error;

pub struct ServiceState {
    task: LoadedTask,
    config: RoutingConfig,
    cost_model: CostModel,
    backend: Arc<dyn LlmBackend>,
    tallies: Mutex<Tallies>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tallies {
    requests: u64,
    failures: u64,
    count_l: usize,
    count_m: usize,
    count_h: usize,
}

impl ServiceState {
    pub fn new(task: LoadedTask, config: RoutingConfig, cost_model: CostModel, backend: Arc<dyn LlmBackend>) -> Result<Self, Error> {
        config.validate()?;
        Ok(Self {
            task,
            config,
            cost_model,
            backend,
            tallies: Mutex::default(),
        })
    }

    fn tallies(&self) -> Tallies {
        *self.tallies.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn update(&self, f: impl FnOnce(&mut Tallies)) {
        f(&mut self.tallies.lock().unwrap_or_else(|e| e.into_inner()));
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    #[serde(default)]
    sample_id: Option<String>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    record_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub prediction: usize,
    pub prediction_label: String,
    pub final_tier: Tier,
    #[serde(rename = "c_L")]
    pub c_l: f64,
    #[serde(rename = "c_M", default, skip_serializing_if = "Option::is_none")]
    pub c_m: Option<f64>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_used: Option<bool>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub requests: u64,
    pub failures: u64,
    #[serde(flatten)]
    pub stats: BatchStats,
    pub cost_model: CostModel,
}

fn error_body(status: StatusCode, kind: &str, message: String) -> Response {
    (status, Json(json!({ "error": kind, "message": message }))).into_response()
}

fn error_response(e: &Error) -> Response {
    match e.root() {
        Error::DimensionMismatch { expected, found, .. } => (
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": "DimensionMismatch", "expected": expected, "found": found })),
        )
            .into_response(),
        root if e.is_validation() => error_body(StatusCode::BAD_REQUEST, e.kind(), root.to_string()),
        root => error_body(StatusCode::SERVICE_UNAVAILABLE, e.kind(), root.to_string()),
    }
}

fn resolve(state: &ServiceState, req: ClassifyRequest) -> Result<(Option<String>, EmbeddingVector), Box<Response>> {
    match (req.embedding, req.record_id) {
        (Some(raw), None) => {
            let dim = state.task.assets.dimension();
            if raw.len() != dim {
                return Err(Box::new(error_response(&Error::DimensionMismatch { expected: dim, found: raw.len(), record: None })));
            }
            let a = EmbeddingVector::normalize(&raw).map_err(|e| Box::new(error_response(&e)))?;
            Ok((req.sample_id, a))
        }
        (None, Some(id)) => match state.task.record(&id) {
            Some(r) => Ok((Some(req.sample_id.unwrap_or(id)), r.embedding.clone())),
            None => Err(Box::new(error_body(StatusCode::BAD_REQUEST, "UnknownRecord", format!("no record with id {id}")))),
        },
        _ => Err(Box::new(error_body(
            StatusCode::BAD_REQUEST,
            "BadRequest",
            "body needs exactly one of \"embedding\" or \"record_id\"".into(),
        ))),
    }
}

async fn classify(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    state.update(|t| t.requests += 1);
    let req: ClassifyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            state.update(|t| t.failures += 1);
            return error_body(StatusCode::BAD_REQUEST, "BadRequest", e.to_string());
        }
    };
    let (sample_id, a) = match resolve(&state, req) {
        Ok(v) => v,
        Err(resp) => {
            state.update(|t| t.failures += 1);
            return *resp;
        }
    };
    let started = Instant::now();
    let worker = Arc::clone(&state);
    let id = sample_id.clone().unwrap_or_default();
    let routed = tokio::task::spawn_blocking(move || {
        route_one(&id, &a, &worker.task.assets, &worker.config, worker.backend.as_ref())
    })
    .await;
    let outcome = match routed {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => {
            state.update(|t| t.failures += 1);
            log::warn!("{e}");
            return error_response(&e);
        }
        Err(e) => {
            state.update(|t| t.failures += 1);
            return error_body(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string());
        }
    };
    state.update(|t| match outcome.final_tier {
        Tier::L => t.count_l += 1,
        Tier::M => t.count_m += 1,
        Tier::H => t.count_h += 1,
    });
    Json(ClassifyResponse {
        sample_id,
        prediction: outcome.prediction,
        prediction_label: state.task.assets.labels.class_names[outcome.prediction].clone(),
        final_tier: outcome.final_tier,
        c_l: outcome.c_l,
        c_m: outcome.c_m,
        fallback_used: outcome.tier_h.as_ref().map(|h| h.fallback_used),
        scores: outcome.final_scores,
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    })
    .into_response()
}

async fn stats(State(state): State<Arc<ServiceState>>) -> Json<StatsResponse> {
    let t = state.tallies();
    Json(StatsResponse {
        requests: t.requests,
        failures: t.failures,
        stats: BatchStats::from_counts(t.count_l, t.count_m, t.count_h, &state.cost_model),
        cost_model: state.cost_model,
    })
}

async fn healthz(State(state): State<Arc<ServiceState>>) -> Response {
    let worker = Arc::clone(&state);
    let ok = tokio::task::spawn_blocking(move || worker.backend.probe()).await.unwrap_or(false);
    if ok {
        Json(json!({ "status": "ok", "task_id": state.task.task_id })).into_response()
    } else {
        error_body(StatusCode::SERVICE_UNAVAILABLE, "BackendUnavailable", "backend probe failed".into())
    }
}

pub fn app(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/classify", post(classify))
        .route("/stats", get(stats))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Serves until the process exits.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServiceState>) -> io::Result<()> {
    axum::serve(listener, app(state)).await
}

/// Binds `addr` and serves from a background thread with its own runtime.
/// Returns the bound address, so port 0 works.
pub fn spawn(addr: &str, state: Arc<ServiceState>) -> io::Result<SocketAddr> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let local = listener.local_addr()?;
    thread::spawn(move || {
        if let Err(e) = runtime.block_on(serve(listener, state)) {
            log::error!("service stopped: {e}");
        }
    });
    Ok(local)
}
