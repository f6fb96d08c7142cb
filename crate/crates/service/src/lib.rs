//! HTTP/JSON facade over one loaded ECS run, for the exploration UI.
//!
//! All state is immutable after start-up; every endpoint is a pure read.
//!
//! | method | path               | body / query                 | response                  |
//! |--------|--------------------|------------------------------|---------------------------|
//! | GET    | `/api/run`         |                              | [`RunSummary`]            |
//! | GET    | `/api/grid`        | `set`, `k`, `gamma`          | [`GridResponse`]          |
//! | POST   | `/api/select`      | `RegionQuery` JSON           | [`SelectResponse`]        |
//! | GET    | `/api/record/{id}` |                              | [`RecordResponse`]        |
//! | POST   | `/api/detect`      | `Rule` JSON                  | `DetectionReport` JSON    |
//!
//! Errors are `{"error": "..."}` with status 400 (bad parameters or body) or
//! 404 (no run loaded, unknown record).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use ecs_core::histogram::DEFAULT_GAMMA;
use ecs_core::{
    build_grid, query_region, Dataset, DeltaSpec, EcsConfig, EcsError, EcsRun, Metric, PairClass,
    RecordMeta, RegionQuery, ResolvedDeltas, Rule,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] EcsError),
    #[error("embedding file {path}: {message}")]
    Embedding { path: PathBuf, message: String },
    #[error("dataset fingerprint {found} does not match the run ({expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("the run artifact records no dataset source")]
    NoSource,
}

/// A run, its dataset and an optional 2-D embedding.
pub struct Session {
    run: EcsRun,
    dataset: Dataset,
    embedding: Option<Vec<[f64; 2]>>,
}

impl Session {
    pub fn new(run: EcsRun, dataset: Dataset, embedding: Option<Vec<[f64; 2]>>) -> Result<Self, ServiceError> {
        let found = dataset.fingerprint();
        if found != run.dataset_fingerprint {
            return Err(ServiceError::FingerprintMismatch {
                expected: run.dataset_fingerprint.clone(),
                found,
            });
        }
        if let Some(e) = &embedding {
            if e.len() != run.n() {
                return Err(ServiceError::Embedding {
                    path: PathBuf::new(),
                    message: format!("{} rows for {} records", e.len(), run.n()),
                });
            }
        }
        Ok(Session {
            run,
            dataset,
            embedding,
        })
    }

    /// Reloads the dataset recorded in the run's provenance.
    pub fn from_run(run: EcsRun, embedding: Option<Vec<[f64; 2]>>) -> Result<Self, ServiceError> {
        let source = run.provenance.source.clone().ok_or(ServiceError::NoSource)?;
        let ds = source.load()?;
        Session::new(run, ds, embedding)
    }

    pub fn run(&self) -> &EcsRun {
        &self.run
    }

    fn point(&self, id: usize) -> Option<[f64; 2]> {
        match &self.embedding {
            Some(e) => Some(e[id]),
            None if self.dataset.d_in() == 2 => {
                let r = self.dataset.input(id);
                Some([r[0], r[1]])
            }
            None => None,
        }
    }
}

/// Reads an `id,x,y` CSV (header optional) with exactly `n` rows.
pub fn load_embedding(path: impl AsRef<Path>, n: usize) -> Result<Vec<[f64; 2]>, ServiceError> {
    let path = path.as_ref();
    let err = |message: String| ServiceError::Embedding {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut out: Vec<Option<[f64; 2]>> = vec![None; n];
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("line {}: expected id,x,y", lineno + 1)));
        }
        let parsed = (f[0].parse::<usize>(), f[1].parse::<f64>(), f[2].parse::<f64>());
        let (id, x, y) = match parsed {
            (Ok(id), Ok(x), Ok(y)) => (id, x, y),
            _ if lineno == 0 => continue,
            _ => return Err(err(format!("line {}: not numeric", lineno + 1))),
        };
        if id >= n || out[id].is_some() {
            return Err(err(format!("line {}: id {id} out of range or repeated", lineno + 1)));
        }
        out[id] = Some([x, y]);
        rows += 1;
    }
    if rows != n {
        return Err(err(format!("{rows} rows for {n} records")));
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, msg.into())
    }
}

impl From<EcsError> for ApiError {
    fn from(e: EcsError) -> Self {
        ApiError::bad(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
struct AppState {
    session: Option<Arc<Session>>,
}

impl AppState {
    fn session(&self) -> Result<&Session, ApiError> {
        self.session
            .as_deref()
            .ok_or_else(|| ApiError::not_found("no run loaded"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub k_max: usize,
    pub config: EcsConfig,
    pub resolved: ResolvedDeltas,
    pub delta_in: DeltaSpec,
    pub delta_out: DeltaSpec,
    pub dataset_fingerprint: String,
    pub tool_version: String,
    pub has_scatter: bool,
}

async fn get_run(State(st): State<AppState>) -> ApiResult<RunSummary> {
    let s = st.session()?;
    Ok(Json(RunSummary {
        n: s.run.n(),
        d_in: s.dataset.d_in(),
        d_out: s.dataset.d_out(),
        k_max: s.run.k_max(),
        config: s.run.config,
        resolved: s.run.resolved,
        delta_in: s.run.config.delta_in,
        delta_out: s.run.config.delta_out,
        dataset_fingerprint: s.run.dataset_fingerprint.clone(),
        tool_version: s.run.provenance.tool_version.clone(),
        has_scatter: s.point(0).is_some(),
    }))
}

/// `columns[k - 1][v]` for `k = 1..=K`, `v = 0..=K`.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridResponse {
    pub set: PairClass,
    pub k: usize,
    pub gamma: f64,
    pub max_count: u64,
    pub counts: Vec<Vec<u64>>,
    pub intensity: Vec<Vec<f64>>,
}

async fn get_grid(
    State(st): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<GridResponse> {
    let s = st.session()?;
    let set: PairClass = q
        .get("set")
        .ok_or_else(|| ApiError::bad("missing parameter set"))?
        .parse()?;
    let k = match q.get("k") {
        Some(v) => v.parse::<usize>().map_err(|_| ApiError::bad(format!("k: not an integer: {v:?}")))?,
        None => s.run.k_max(),
    };
    let gamma = match q.get("gamma") {
        Some(v) => v.parse::<f64>().map_err(|_| ApiError::bad(format!("gamma: not a number: {v:?}")))?,
        None => DEFAULT_GAMMA,
    };
    let grid = build_grid(&s.run, set, k, gamma)?;
    let rows = k + 1;
    Ok(Json(GridResponse {
        set,
        k,
        gamma,
        max_count: grid.max_count(),
        counts: grid.counts.chunks(rows).map(<[u64]>::to_vec).collect(),
        intensity: grid.intensity.chunks(rows).map(<[f64]>::to_vec).collect(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    /// `F_set(k)` for `k = k_lo..=k_hi`.
    pub values: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectResponse {
    pub ids: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("malformed JSON body: {e}")))
}

async fn post_select(State(st): State<AppState>, body: Bytes) -> ApiResult<SelectResponse> {
    let s = st.session()?;
    let q: RegionQuery = parse_body(&body)?;
    q.validate(s.run.k_max())?;
    let grid = build_grid(&s.run, q.set, q.k_hi, DEFAULT_GAMMA)?;
    let ids = query_region(&s.run, &grid, &q)?;
    let trajectories = ids
        .iter()
        .map(|&id| Trajectory {
            id,
            values: s.run.profile(id).cumulative(q.set)[q.k_lo - 1..q.k_hi].to_vec(),
        })
        .collect();
    Ok(Json(SelectResponse { ids, trajectories }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: usize,
    pub height: usize,
    /// Raw row-major grayscale bytes, base64 (standard alphabet).
    pub pixels_base64: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub rank: usize,
    pub id: usize,
    pub input_distance: f64,
    pub output_distance: f64,
    pub class: PairClass,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordResponse {
    pub id: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image: Option<ImagePayload>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_row: Option<usize>,
    pub embedding: Option<[f64; 2]>,
    pub neighbors: Vec<NeighborEntry>,
}

async fn get_record(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<RecordResponse> {
    let s = st.session()?;
    let id: usize = id
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown record {id:?}")))?;
    if id >= s.run.n() {
        return Err(ApiError::not_found(format!("unknown record {id} (n = {})", s.run.n())));
    }
    let p = s.run.profile(id);
    let cfg = &s.run.config;
    let neighbors = p
        .neighbor_ids
        .iter()
        .zip(p.class_at_rank)
        .enumerate()
        .map(|(r, (&j, &class))| NeighborEntry {
            rank: r + 1,
            id: j as usize,
            input_distance: cfg.in_metric.eval(s.dataset.input(id), s.dataset.input(j as usize)),
            output_distance: cfg.out_metric.eval(s.dataset.output(id), s.dataset.output(j as usize)),
            class,
        })
        .collect();
    let (image, source_row) = match s.dataset.meta(id) {
        Some(RecordMeta::Image { width, height, pixels }) => (
            Some(ImagePayload {
                width: *width,
                height: *height,
                pixels_base64: base64::engine::general_purpose::STANDARD.encode(pixels),
            }),
            None,
        ),
        Some(RecordMeta::SourceRow(r)) => (None, Some(*r)),
        None => (None, None),
    };
    Ok(Json(RecordResponse {
        id,
        input: s.dataset.input(id).to_vec(),
        output: s.dataset.output(id).to_vec(),
        image,
        source_row,
        embedding: s.point(id),
        neighbors,
    }))
}

async fn post_detect(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let s = st.session()?;
    let rule: Rule = parse_body(&body)?;
    let report = rule.run(&s.run)?;
    Ok(Json(report).into_response())
}

const INDEX_HTML: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>ECS explorer</title></head>\n<body><h1>ECS explorer</h1><p>No UI assets were configured. The JSON API lives under <code>/api</code>: \
<code>/api/run</code>, <code>/api/grid</code>, <code>/api/select</code>, <code>/api/record/{id}</code>, <code>/api/detect</code>.</p></body></html>\n";

/// Builds the router. `static_dir`, when given, is served at `/`.
pub fn router(session: Option<Session>, static_dir: Option<PathBuf>) -> Router {
    let state = AppState {
        session: session.map(Arc::new),
    };
    let api = Router::new()
        .route("/api/run", get(get_run))
        .route("/api/grid", get(get_grid))
        .route("/api/select", post(post_select))
        .route("/api/record/:id", get(get_record))
        .route("/api/detect", post(post_detect))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX_HTML) })),
    }
}

pub async fn serve(addr: std::net::SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}

/// Runs [`serve`] on a fresh multi-threaded runtime until the server stops.
pub fn serve_blocking(addr: std::net::SocketAddr, app: Router) -> std::io::Result<()> {
    tokio::runtime::Runtime::new()?.block_on(serve(addr, app))
}
