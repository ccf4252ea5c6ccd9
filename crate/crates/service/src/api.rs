use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;

use crate::error::{ApiError, ErrorCode};
use crate::service::{EventKind, Service, StreamEvent};

pub const DEFAULT_RUNS_LIMIT: usize = 50;
pub const MAX_RUNS_LIMIT: usize = 1000;

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

pub fn router(service: Service) -> Router {
    let api = Router::new()
        .route("/state", get(state))
        .route("/ingest/historian", post(ingest))
        .route("/plan", post(plan))
        .route("/whatif", post(whatif))
        .route("/operator/action", post(action))
        .route("/sim/tick", post(tick))
        .route("/runs", get(runs))
        .route("/runs/{id}", get(run))
        .route("/stream", get(stream));
    Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this endpoint")
        })
        .with_state(service)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

async fn state(State(svc): State<Service>) -> impl IntoResponse {
    Json(svc.snapshot().as_ref().clone())
}

async fn ingest(State(svc): State<Service>, bytes: Bytes) -> ApiResult<crate::service::IngestResponse> {
    let text = std::str::from_utf8(&bytes).map_err(|e| ApiError::new(ErrorCode::ParseError, format!("body is not UTF-8: {e}")))?;
    svc.ingest_historian(text).await.map(Json)
}

async fn plan(State(svc): State<Service>, bytes: Bytes) -> ApiResult<hydrotwin_core::datastore::RunRecord> {
    svc.plan(body(&bytes)?).await.map(Json)
}

async fn whatif(State(svc): State<Service>, bytes: Bytes) -> ApiResult<crate::service::WhatIfResponse> {
    svc.whatif(&body(&bytes)?).map(Json)
}

async fn action(State(svc): State<Service>, bytes: Bytes) -> ApiResult<hydrotwin_core::datastore::RunRecord> {
    svc.operator_action(body(&bytes)?).await.map(Json)
}

async fn tick(State(svc): State<Service>, bytes: Bytes) -> ApiResult<crate::service::TickResponse> {
    svc.tick(body(&bytes)?).await.map(Json)
}

fn query_usize(query: &str, key: &str, default: usize) -> Result<usize, ApiError> {
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if k == key {
            return v
                .parse()
                .map_err(|_| ApiError::invalid(format!("query parameter {key} must be a non-negative integer")));
        }
    }
    Ok(default)
}

async fn runs(State(svc): State<Service>, RawQuery(query): RawQuery) -> ApiResult<crate::service::RunsPage> {
    let query = query.unwrap_or_default();
    let limit = query_usize(&query, "limit", DEFAULT_RUNS_LIMIT)?.min(MAX_RUNS_LIMIT);
    let offset = query_usize(&query, "offset", 0)?;
    Ok(Json(svc.runs(limit, offset)))
}

async fn run(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<hydrotwin_core::datastore::RunRecord> {
    let id: u64 = id.parse().map_err(|_| ApiError::not_found(format!("run {id}")))?;
    svc.run(id).map(Json)
}

fn to_sse(event: &StreamEvent) -> Event {
    Event::default()
        .event(event.kind.as_str())
        .data(serde_json::to_string(event).unwrap_or_else(|_| "{}".into()))
}

/// Server-sent events. A new client first receives the current snapshot,
/// then every event published after it.
async fn stream(State(svc): State<Service>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    // subscribe before reading the snapshot so nothing falls in between
    let rx = svc.subscribe();
    let snap = svc.snapshot();
    let version = snap.state_version;
    let first = StreamEvent {
        kind: EventKind::Snapshot,
        payload: json!(*snap),
        state_version: version,
    };
    let rest = BroadcastStream::new(rx).filter_map(move |msg| async move {
        match msg {
            Ok(e) if e.state_version > version => Some(e),
            _ => None,
        }
    });
    let events = stream::once(async move { first }).chain(rest).map(|e| Ok(to_sse(&e)));
    Sse::new(events).keep_alive(KeepAlive::default())
}
