//! HTTP/JSON API. Every handler checks, in order: token (401), request
//! parameters (400), scope and point authorization (403), point existence
//! (404).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gridmon_core::{param_index, EventType, MeasurementPoint, PQEvent, Resolution, PARAM_NAMES};
use gridmon_ingest::CounterSnapshot;
use serde::Serialize;
use serde_json::json;

use crate::service::{ImportErrorKind, Service};
use crate::timefmt::parse_ts;
use crate::tokens::{ApiToken, Scope};

type Params = Query<HashMap<String, String>>;

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    BadRequest(String),
    Forbidden(&'static str),
    NotFound(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "missing or unknown token".to_string()),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Forbidden(m) => (StatusCode::FORBIDDEN, m.to_string()),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/api/v1/series", get(series))
        .route("/api/v1/events", get(events))
        .route("/api/v1/points", get(points))
        .route("/api/v1/status", get(status))
        .route("/api/v1/export", get(export))
        .route("/api/v1/import/bulk", post(import_bulk))
        .route("/api/v1/admin/demote", post(demote))
        .with_state(svc)
}

fn auth<'a>(svc: &'a Service, headers: &HeaderMap) -> Result<&'a ApiToken, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .and_then(|t| svc.tokens().get(t.trim()))
        .ok_or(ApiError::Unauthorized)
}

fn required<'a>(q: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    q.get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::BadRequest(format!("missing parameter `{key}`")))
}

fn point_param(q: &HashMap<String, String>) -> Result<u32, ApiError> {
    required(q, "point")?
        .parse()
        .map_err(|_| ApiError::BadRequest("`point` must be an unsigned integer".into()))
}

fn res_param(q: &HashMap<String, String>, default: Option<Resolution>) -> Result<Resolution, ApiError> {
    match (q.get("res"), default) {
        (None, Some(d)) => Ok(d),
        _ => Resolution::from_str(required(q, "res")?)
            .map_err(|_| ApiError::BadRequest("`res` must be one of 100ms, 1s, 3s, 10min".into())),
    }
}

fn ts_param(q: &HashMap<String, String>, key: &str) -> Result<u64, ApiError> {
    parse_ts(required(q, key)?)
        .ok_or_else(|| ApiError::BadRequest(format!("`{key}` must be epoch ms or ISO-8601 UTC")))
}

fn range(q: &HashMap<String, String>) -> Result<(u64, u64), ApiError> {
    let (from, to) = (ts_param(q, "from")?, ts_param(q, "to")?);
    if from > to {
        return Err(ApiError::BadRequest("`from` is after `to`".into()));
    }
    Ok((from, to))
}

fn authorize(svc: &Service, tok: &ApiToken, scope: Scope, point: u32) -> Result<(), ApiError> {
    if !tok.has(scope) {
        return Err(ApiError::Forbidden("token lacks the required scope"));
    }
    // checked before existence so unauthorized callers learn nothing
    if !tok.allows(point) {
        return Err(ApiError::Forbidden("token is not authorized for this point"));
    }
    if !svc.center().registry().contains(point) {
        return Err(ApiError::NotFound(format!("unknown point {point}")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SeriesResponse {
    pub point_id: u32,
    pub param: &'static str,
    pub resolution: Resolution,
    pub from: u64,
    pub to: u64,
    /// `[ts_ms, value, flags]`
    pub values: Vec<(u64, f64, u8)>,
}

async fn series(State(svc): State<Arc<Service>>, headers: HeaderMap, Query(q): Params) -> Result<Json<SeriesResponse>, ApiError> {
    let tok = auth(&svc, &headers)?;
    let point = point_param(&q)?;
    let param = required(&q, "param")?;
    let idx = param_index(param).ok_or_else(|| ApiError::BadRequest(format!("unknown parameter `{param}`")))?;
    let res = res_param(&q, None)?;
    let (from, to) = range(&q)?;
    authorize(&svc, tok, Scope::Read, point)?;
    let recs = svc
        .center()
        .store()
        .query_range(point, res, from, to)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(SeriesResponse {
        point_id: point,
        param: PARAM_NAMES[idx],
        resolution: res,
        from,
        to,
        values: recs.iter().map(|r| (r.ts_ms, r.value(idx), r.flags.bits())).collect(),
    }))
}

async fn events(State(svc): State<Arc<Service>>, headers: HeaderMap, Query(q): Params) -> Result<Json<Vec<PQEvent>>, ApiError> {
    let tok = auth(&svc, &headers)?;
    let point = point_param(&q)?;
    let (from, to) = range(&q)?;
    let kind = match q.get("type") {
        None => None,
        Some(t) => Some(
            EventType::from_str(t)
                .map_err(|_| ApiError::BadRequest("`type` must be SAG, SWELL or INTERRUPTION".into()))?,
        ),
    };
    authorize(&svc, tok, Scope::Read, point)?;
    Ok(Json(svc.center().events().query(point, from, to, kind)))
}

async fn points(State(svc): State<Arc<Service>>, headers: HeaderMap) -> Result<Json<Vec<MeasurementPoint>>, ApiError> {
    let tok = auth(&svc, &headers)?;
    Ok(Json(
        svc.center()
            .registry()
            .iter()
            .filter(|p| tok.allows(p.point_id))
            .cloned()
            .collect(),
    ))
}

#[derive(Debug, Serialize)]
pub struct StatusResponse {
    #[serde(flatten)]
    pub counters: CounterSnapshot,
    pub hot_records: usize,
    pub segments: usize,
    pub events: usize,
    pub pending_rollups: usize,
    pub now_ms: u64,
}

async fn status(State(svc): State<Arc<Service>>, headers: HeaderMap) -> Result<Json<StatusResponse>, ApiError> {
    auth(&svc, &headers)?;
    let c = svc.center();
    Ok(Json(StatusResponse {
        counters: c.counters(),
        hot_records: c.store().hot_record_count(),
        segments: c.store().segment_count(),
        events: c.events().len(),
        pending_rollups: c.pending_rollups(),
        now_ms: svc.now_ms(),
    }))
}

/// Header of the export CSV.
pub fn export_header() -> String {
    let mut h = String::from("point_id,ts_ms,resolution,flags");
    for p in PARAM_NAMES {
        h.push(',');
        h.push_str(p);
    }
    h
}

async fn export(State(svc): State<Arc<Service>>, headers: HeaderMap, Query(q): Params) -> Result<Response, ApiError> {
    let tok = auth(&svc, &headers)?;
    let point = point_param(&q)?;
    let res = res_param(&q, None)?;
    let (from, to) = range(&q)?;
    authorize(&svc, tok, Scope::Export, point)?;
    let recs = svc
        .center()
        .store()
        .query_range(point, res, from, to)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let mut out = export_header();
    out.push('\n');
    for r in recs {
        let _ = write!(out, "{},{},{},{}", r.point_id, r.ts_ms, r.resolution, r.flags.bits());
        for v in r.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "text/csv")], out).into_response())
}

async fn import_bulk(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(q): Params,
    body: Bytes,
) -> Result<Response, ApiError> {
    let tok = auth(&svc, &headers)?.clone();
    let res = res_param(&q, Some(Resolution::R3S))?;
    if !tok.has(Scope::Import) {
        return Err(ApiError::Forbidden("token lacks the required scope"));
    }
    let s = svc.clone();
    let result = tokio::task::spawn_blocking(move || s.import_csv(&body, res, |p| tok.allows(p)))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    match result {
        Ok(r) => Ok(Json(r).into_response()),
        Err(ImportErrorKind::Parse(e)) => Err(ApiError::BadRequest(e.to_string())),
        Err(ImportErrorKind::Ingest(e)) => Err(ApiError::Internal(e.to_string())),
    }
}

async fn demote(State(svc): State<Arc<Service>>, headers: HeaderMap, Query(q): Params) -> Result<Response, ApiError> {
    let tok = auth(&svc, &headers)?;
    let cutoff = ts_param(&q, "cutoff")?;
    if !tok.has(Scope::Admin) {
        return Err(ApiError::Forbidden("token lacks the required scope"));
    }
    let s = svc.clone();
    let paths = tokio::task::spawn_blocking(move || s.demote(cutoff))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    Ok(Json(json!({ "cutoff": cutoff, "segments": names })).into_response())
}
