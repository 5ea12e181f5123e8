//! JSON API over a trained model and its cohort.
//!
//! | Route | Description |
//! |---|---|
//! | `GET /healthz` | `{status, checkpoint_id}` |
//! | `GET /api/patients?limit&offset` | patient list ordered by id |
//! | `GET /api/patients/{id}/trajectory` | per-visit values, risk and attention |
//! | `POST /api/predict` | risk and attention for uploaded records |
//! | `GET /api/statistics/features` | importance curves and cause heatmap |

pub mod config;
pub mod request;
pub mod state;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::ServiceConfig;
pub use request::{parse_predict_request, FieldErrors};
pub use state::{check_prediction, checkpoint_id, AppState, PatientSummary, TrajectoryResponse};

pub const DEFAULT_LIMIT: usize = 50;

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    let mut res = (status, body).into_response();
    res.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    res
}

fn json_value(status: StatusCode, body: &impl Serialize) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => json_bytes(status, bytes),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "serialization", &e.to_string(), &[]),
    }
}

fn error(status: StatusCode, code: &str, message: &str, fields: &[String]) -> Response {
    let body = json!({ "error": code, "message": message, "fields": fields });
    json_bytes(status, serde_json::to_vec(&body).unwrap_or_default())
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    json_value(StatusCode::OK, &json!({ "status": "ok", "checkpoint_id": state.checkpoint_id }))
}

fn parse_usize(query: &HashMap<String, String>, key: &str, default: usize, bad: &mut Vec<String>) -> usize {
    match query.get(key) {
        None => default,
        Some(raw) => raw.parse().unwrap_or_else(|_| {
            bad.push(key.to_string());
            default
        }),
    }
}

async fn list_patients(State(state): State<Arc<AppState>>, Query(query): Query<HashMap<String, String>>) -> Response {
    let mut bad = Vec::new();
    let limit = parse_usize(&query, "limit", DEFAULT_LIMIT, &mut bad);
    let offset = parse_usize(&query, "offset", 0, &mut bad);
    if !bad.is_empty() {
        return error(StatusCode::BAD_REQUEST, "invalid_query", "limit and offset must be non-negative integers", &bad);
    }
    let page: Vec<&PatientSummary> = state.patients.iter().skip(offset).take(limit).collect();
    json_value(
        StatusCode::OK,
        &json!({ "total": state.patients.len(), "offset": offset, "limit": limit, "patients": page }),
    )
}

async fn trajectory(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.trajectories.get(&id) {
        Some(bytes) => json_bytes(StatusCode::OK, bytes.clone()),
        None => error(StatusCode::NOT_FOUND, "unknown_patient", &format!("no patient with id {id:?}"), &[]),
    }
}

#[derive(Serialize)]
struct PredictedVisit {
    date: chrono::NaiveDate,
    risk: f64,
    attention: Vec<f64>,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_json", &e.to_string(), &["body".to_string()]),
    };
    let record = match parse_predict_request(&value, state.predictor.feature_names().len()) {
        Ok(r) => r,
        Err(errs) => {
            return error(StatusCode::BAD_REQUEST, "schema_violation", &errs.messages.join("; "), &errs.fields)
        }
    };
    let preds = match state.predictor.predict_record(&record) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "prediction_failed", &e.to_string(), &[]),
    };
    if let Err(e) = preds.iter().try_for_each(check_prediction) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "invalid_prediction", &e.to_string(), &[]);
    }
    let visits: Vec<PredictedVisit> = record
        .visits
        .iter()
        .zip(preds)
        .map(|(v, p)| PredictedVisit { date: v.date, risk: p.risk, attention: p.attention })
        .collect();
    json_value(StatusCode::OK, &json!({ "features": state.predictor.feature_names(), "visits": visits }))
}

async fn statistics(State(state): State<Arc<AppState>>) -> Response {
    match &state.statistics {
        Some(bytes) => json_bytes(StatusCode::OK, bytes.clone()),
        None => error(
            StatusCode::SERVICE_UNAVAILABLE,
            "exports_missing",
            "feature statistics are not available; run `aicare interpret` and set exports_dir to its output",
            &[],
        ),
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|h| h.to_str().ok())
            .and_then(|h| h.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token", &[]);
        }
    }
    next.run(req).await
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not_found", "no such route", &[])
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/patients", get(list_patients))
        .route("/api/patients/{id}/trajectory", get(trajectory))
        .route("/api/predict", post(predict))
        .route("/api/statistics/features", get(statistics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(api)
        .fallback(not_found)
        .with_state(state)
}

/// Loads the snapshot, binds and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> aicare::Result<()> {
    let state = Arc::new(AppState::load(&config)?);
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| aicare::Error::io(&addr, e))?;
    eprintln!("serving on http://{addr} (checkpoint {})", state.checkpoint_id);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| aicare::Error::io(&addr, e))
}
