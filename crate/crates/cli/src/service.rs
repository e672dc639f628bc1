//! HTTP/JSON service over one dataset.
//!
//! Mutating evaluations (exact, or approximate with `phi <= 1`) are
//! serialized through a FIFO gate; read-only endpoints and estimate-only
//! queries (`phi > 1`) take a shared lock.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tileprobe::{
    estimate, evaluate_approx, evaluate_exact, AggregateFunction, AggregateRequest, ApproxAnswer,
    Error, ExactAnswer, Rect, RowReader, ScoreParams, Telemetry, TileIndex,
};
use tokio::sync::{Mutex, RwLock};
use tower_http::services::ServeDir;

pub const DEFAULT_POINT_LIMIT: usize = 5_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Queue concurrent mutating queries (FIFO) instead of answering 409.
    pub queue_mutations: bool,
    pub static_dir: Option<PathBuf>,
    pub score: ScoreParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            queue_mutations: true,
            static_dir: None,
            score: ScoreParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Totals {
    pub queries: u64,
    pub rows_read: u64,
    pub tiles_split: u64,
    pub elapsed_us: u64,
}

struct Session {
    index: TileIndex,
    totals: Totals,
}

#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<Session>>,
    reader: Arc<RowReader>,
    gate: Arc<Mutex<()>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(index: TileIndex, config: ServiceConfig) -> Self {
        let reader = RowReader::new(index.descriptor());
        Self {
            session: Arc::new(RwLock::new(Session {
                index,
                totals: Totals::default(),
            })),
            reader: Arc::new(reader),
            gate: Arc::new(Mutex::new(())),
            config: Arc::new(config),
        }
    }

    /// The lock held by an in-flight mutating query.
    pub fn mutation_gate(&self) -> Arc<Mutex<()>> {
        self.gate.clone()
    }

    /// Rows read from the data file since startup.
    pub fn rows_read(&self) -> u64 {
        self.reader.rows_read()
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/dataset", get(dataset))
        .route("/api/query", post(query))
        .route("/api/tiles", get(tiles))
        .route("/api/points", get(points))
        .route("/api/stats", get(stats))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidRect(_)
            | Error::InvalidConfig(_)
            | Error::UntrackedAttribute(_)
            | Error::MissingAttribute(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn dataset(State(state): State<AppState>) -> ApiResult<serde_json::Value> {
    let s = state.session.read().await;
    Ok(Json(json!({
        "descriptor": s.index.descriptor(),
        "domain": s.index.domain(),
        "index": {
            "initial_grid": s.index.config().initial_grid,
            "split_factor": s.index.config().split_factor,
            "max_depth": s.index.config().max_depth,
            "min_split_count": s.index.config().min_split_count,
        },
        "objects": s.index.object_count(),
    })))
}

/// An attribute given as a column index or a header name.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum AttributeRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
pub struct RequestBody {
    #[serde(default)]
    pub attribute: Option<AttributeRef>,
    pub function: String,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
pub struct QueryBody {
    pub rect: Rect,
    pub requests: Vec<RequestBody>,
    #[serde(default)]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RequestResult {
    pub attribute: Option<usize>,
    pub function: AggregateFunction,
    pub label: String,
    pub value: Option<f64>,
    pub ci: Option<Interval>,
    pub reported_bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct TelemetryView {
    pub rows_read: u64,
    pub tiles_split: u64,
    pub elapsed_us: u64,
}

impl From<Telemetry> for TelemetryView {
    fn from(t: Telemetry) -> Self {
        Self {
            rows_read: t.rows_read,
            tiles_split: t.tiles_split,
            elapsed_us: t.elapsed.as_micros() as u64,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct QueryResponse {
    /// `exact`, `approx` or `estimate`.
    pub mode: &'static str,
    pub phi: Option<f64>,
    pub results: Vec<RequestResult>,
    pub telemetry: TelemetryView,
}

impl QueryResponse {
    pub fn from_exact(requests: &[AggregateRequest], a: &ExactAnswer) -> Self {
        let results = requests
            .iter()
            .zip(&a.values)
            .map(|(r, &value)| RequestResult {
                attribute: r.attribute,
                function: r.function,
                label: r.label(),
                value,
                ci: value.map(|v| Interval { lo: v, hi: v }),
                reported_bound: 0.0,
            })
            .collect();
        Self {
            mode: "exact",
            phi: None,
            results,
            telemetry: a.telemetry.into(),
        }
    }

    pub fn from_approx(
        requests: &[AggregateRequest],
        a: &ApproxAnswer,
        mode: &'static str,
        phi: f64,
    ) -> Self {
        let results = requests
            .iter()
            .zip(&a.estimates)
            .map(|(r, e)| RequestResult {
                attribute: r.attribute,
                function: r.function,
                label: r.label(),
                value: e.value,
                ci: e.ci.map(|c| Interval { lo: c.lo, hi: c.hi }),
                reported_bound: e.reported_bound,
            })
            .collect();
        Self {
            mode,
            phi: Some(phi),
            results,
            telemetry: a.telemetry.into(),
        }
    }
}

fn parse_requests(
    index: &TileIndex,
    body: &[RequestBody],
) -> Result<Vec<AggregateRequest>, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("at least one request is required"));
    }
    let d = index.descriptor();
    body.iter()
        .map(|r| {
            let function: AggregateFunction = r.function.parse().map_err(ApiError::bad_request)?;
            let attribute = match &r.attribute {
                None => None,
                Some(AttributeRef::Index(i)) => Some(*i),
                Some(AttributeRef::Name(n)) => Some(
                    d.column_by_name(n)
                        .ok_or_else(|| ApiError::bad_request(format!("unknown attribute {n:?}")))?,
                ),
            };
            if let Some(a) = attribute {
                if d.tracked_slot(a).is_none() {
                    return Err(Error::UntrackedAttribute(a).into());
                }
            } else if function != AggregateFunction::Count {
                return Err(Error::MissingAttribute(function).into());
            }
            Ok(AggregateRequest {
                function,
                attribute,
            })
        })
        .collect()
}

async fn query(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<QueryResponse>, ApiError> {
    let body: QueryBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("malformed query: {e}")))?;
    body.rect.validate()?;
    let phi = body.phi;
    if let Some(p) = phi {
        if p.is_nan() || p < 0.0 {
            return Err(ApiError::bad_request(format!(
                "phi must be >= 0 or null, got {p}"
            )));
        }
    }
    let score = state.config.score;

    if let Some(p) = phi.filter(|&p| p > 1.0) {
        let s = state.session.read().await;
        let requests = parse_requests(&s.index, &body.requests)?;
        let a = estimate(&s.index, &body.rect, &requests, &score)?;
        return Ok(Json(QueryResponse::from_approx(
            &requests, &a, "estimate", p,
        )));
    }

    let permit = if state.config.queue_mutations {
        state.gate.clone().lock_owned().await
    } else {
        state.gate.clone().try_lock_owned().map_err(|_| ApiError {
            status: StatusCode::CONFLICT,
            message: "another query is adapting the index".into(),
        })?
    };
    let mut session = state.session.clone().write_owned().await;
    let reader = state.reader.clone();
    let rect = body.rect;
    let requests_body = body.requests;
    let response = tokio::task::spawn_blocking(move || -> Result<QueryResponse, ApiError> {
        let _permit = permit;
        let requests = parse_requests(&session.index, &requests_body)?;
        let response = match phi {
            None => {
                let a = evaluate_exact(&mut session.index, &reader, &rect, &requests)?;
                QueryResponse::from_exact(&requests, &a)
            }
            Some(p) => {
                let a = evaluate_approx(&mut session.index, &reader, &rect, &requests, p, &score)?;
                QueryResponse::from_approx(&requests, &a, "approx", p)
            }
        };
        let t = &mut session.totals;
        t.queries += 1;
        t.rows_read += response.telemetry.rows_read;
        t.tiles_split += response.telemetry.tiles_split;
        t.elapsed_us += response.telemetry.elapsed_us;
        Ok(response)
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("query task failed: {e}"),
    })??;
    Ok(Json(response))
}

#[derive(Debug, Deserialize)]
struct TilesParams {
    max_depth: Option<u32>,
}

async fn tiles(
    State(state): State<AppState>,
    Query(p): Query<TilesParams>,
) -> ApiResult<tileprobe::index::IndexSnapshot> {
    let s = state.session.read().await;
    Ok(Json(s.index.snapshot(p.max_depth)))
}

#[derive(Debug, Deserialize)]
struct PointsParams {
    rect: Option<String>,
    limit: Option<usize>,
}

/// Parses `xMin,xMax,yMin,yMax`.
pub fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad rect component {p:?}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x_min, x_max, y_min, y_max] => {
            Rect::new(x_min, x_max, y_min, y_max).map_err(|e| e.to_string())
        }
        _ => Err(format!(
            "rect needs 4 comma-separated numbers, got {}",
            v.len()
        )),
    }
}

async fn points(
    State(state): State<AppState>,
    Query(p): Query<PointsParams>,
) -> ApiResult<serde_json::Value> {
    let s = state.session.read().await;
    let rect = match p.rect {
        Some(r) => parse_rect(&r).map_err(ApiError::bad_request)?,
        None => s.index.domain(),
    };
    let limit = p.limit.unwrap_or(DEFAULT_POINT_LIMIT);
    // one extra point tells whether the answer was truncated
    let mut pts = s.index.points_in(&rect, limit.saturating_add(1));
    let truncated = pts.len() > limit;
    pts.truncate(limit);
    Ok(Json(json!({ "points": pts, "truncated": truncated })))
}

async fn stats(State(state): State<AppState>) -> ApiResult<serde_json::Value> {
    let s = state.session.read().await;
    Ok(Json(json!({
        "totals": s.totals,
        "file_rows_read": state.reader.rows_read(),
        "tiles": s.index.tiles().len(),
        "leaves": s.index.leaf_count(),
    })))
}
