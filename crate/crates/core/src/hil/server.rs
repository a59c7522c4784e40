//! JSON HTTP API for the labeling UI, mounted under `/api/v1`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{finetune, ClassChoice, FinetuneReport, HilError, LabelStore, Session};
use crate::error::Error;
use crate::eval::accuracy::embed_images;
use crate::eval::manifest::{Manifest, MANIFEST_FILE};
use crate::nn::checkpoint;
use crate::nn::train::TrainConfig;
use crate::nn::Network;
use crate::render::{pgm, TrajectoryImage};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub train: TrainConfig,
    /// Where fine-tuned weights are written.
    pub checkpoint_out: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum JobStatus {
    Running,
    Succeeded { report: FinetuneReport },
    Failed { error: String },
}

struct Inner {
    session: Mutex<Session>,
    images: Vec<TrajectoryImage>,
    index: HashMap<String, usize>,
    net: Mutex<Network<f32>>,
    jobs: Mutex<Vec<JobStatus>>,
    options: ServerOptions,
}

/// Shared server state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    /// `ids[i]` names `images[i]`; the pool is embedded with `net` up front.
    pub fn new(
        ids: Vec<String>,
        images: Vec<TrajectoryImage>,
        store: LabelStore,
        net: Network<f32>,
        options: ServerOptions,
    ) -> Result<Self, HilError> {
        if ids.len() != images.len() {
            return Err(Error::contract("one image per id required").into());
        }
        let embeddings = embed_images(&net, &images)?;
        let budget = super::default_budget(ids.len());
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let session = Session::new(ids, embeddings, store, options.seed, budget)?;
        Ok(AppState(Arc::new(Inner {
            session: Mutex::new(session),
            images,
            index,
            net: Mutex::new(net),
            jobs: Mutex::new(Vec::new()),
            options,
        })))
    }

    /// Pool from a dataset directory written by `build_dataset`.
    pub fn from_dataset(dataset: &Path, labels: &Path, net: Network<f32>, options: ServerOptions) -> Result<Self, HilError> {
        let manifest = Manifest::read(&dataset.join(MANIFEST_FILE))?;
        let images = manifest.load_images(dataset)?;
        let ids = manifest.records.into_iter().map(|r| r.id).collect();
        Self::new(ids, images, LabelStore::open(labels)?, net, options)
    }

    pub fn network(&self) -> Network<f32> {
        lock(&self.0.net).clone()
    }

    pub fn job(&self, id: usize) -> Option<JobStatus> {
        lock(&self.0.jobs).get(id.checked_sub(1)?).cloned()
    }

    fn run_finetune(&self, job: usize) {
        let outcome = (|| -> Result<FinetuneReport, HilError> {
            let (ids, labels) = lock(&self.0.session).labeled_snapshot();
            let images: Vec<TrajectoryImage> = ids.iter().map(|id| self.0.images[self.0.index[id]].clone()).collect();
            let net = self.network();
            let o = &self.0.options;
            let (tuned, report) = finetune(&net, &images, &labels, &o.train, o.seed.wrapping_add(job as u64))?;
            let embeddings = embed_images(&tuned, &self.0.images)?;
            if let Some(path) = &o.checkpoint_out {
                checkpoint::save(path, &tuned, json!({ "finetune": report }))?;
            }
            lock(&self.0.session).set_embeddings(embeddings)?;
            *lock(&self.0.net) = tuned;
            Ok(report)
        })();
        let status = match outcome {
            Ok(report) => JobStatus::Succeeded { report },
            Err(e) => {
                log::error!("fine-tune job {job} failed: {e}");
                JobStatus::Failed { error: e.to_string() }
            }
        };
        lock(&self.0.jobs)[job - 1] = status;
    }
}

impl IntoResponse for HilError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            HilError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            HilError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            HilError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            HilError::Core(Error::Contract(_)) => (StatusCode::BAD_REQUEST, "bad_request"),
            HilError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": kind, "detail": self.to_string() }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, HilError> {
    serde_json::from_slice(body).map_err(|e| HilError::BadRequest(format!("invalid JSON body: {e}")))
}

#[derive(Debug, Serialize)]
struct QueryResponse {
    query_id: u64,
    image_id: String,
    image_url: String,
}

async fn next_query(State(s): State<AppState>) -> Response {
    match lock(&s.0.session).next_query() {
        Some(q) => Json(QueryResponse {
            image_url: format!("/api/v1/images/{}", q.image_id),
            query_id: q.query_id,
            image_id: q.image_id,
        })
        .into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn skip_query(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, HilError> {
    let id: u64 = id.parse().map_err(|_| HilError::BadRequest(format!("bad query id {id:?}")))?;
    let q = lock(&s.0.session).skip(id)?;
    Ok(Json(q).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    query_id: u64,
    #[serde(default)]
    class_id: Option<u32>,
    #[serde(default)]
    new_class_name: Option<String>,
    labeler_id: String,
}

async fn post_label(State(s): State<AppState>, body: Bytes) -> Result<Response, HilError> {
    let req: LabelRequest = parse_body(&body)?;
    let choice = match (req.class_id, req.new_class_name) {
        (Some(id), None) => ClassChoice::Existing(id),
        (None, Some(name)) => ClassChoice::New(name),
        _ => return Err(HilError::BadRequest("give exactly one of class_id and new_class_name".into())),
    };
    let (record, created) = lock(&s.0.session).submit_label(req.query_id, &choice, &req.labeler_id)?;
    Ok(Json(json!({
        "label_id": record.label_id,
        "class_id": record.class_id,
        "created_class": created,
    }))
    .into_response())
}

async fn classes(State(s): State<AppState>) -> Response {
    let session = lock(&s.0.session);
    let counts = session.store().class_counts();
    let out: Vec<_> = session
        .store()
        .classes()
        .iter()
        .map(|c| {
            json!({
                "class_id": c.class_id,
                "display_name": c.display_name,
                "exemplar": c.exemplar,
                "count": counts.get(&c.class_id).copied().unwrap_or(0),
            })
        })
        .collect();
    Json(out).into_response()
}

async fn image(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, HilError> {
    let i = *s.0.index.get(&id).ok_or_else(|| HilError::NotFound(format!("image {id}")))?;
    let png = pgm::to_png(&s.0.images[i])?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn progress(State(s): State<AppState>) -> Response {
    Json(lock(&s.0.session).progress()).into_response()
}

async fn start_finetune(State(s): State<AppState>) -> Result<Response, HilError> {
    let job = {
        let mut jobs = lock(&s.0.jobs);
        if jobs.contains(&JobStatus::Running) {
            return Err(HilError::Conflict("a fine-tune job is already running".into()));
        }
        jobs.push(JobStatus::Running);
        jobs.len()
    };
    let state = s.clone();
    tokio::task::spawn_blocking(move || state.run_finetune(job));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job }))).into_response())
}

async fn job_status(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, HilError> {
    let status = id
        .parse::<usize>()
        .ok()
        .and_then(|i| s.job(i))
        .ok_or_else(|| HilError::NotFound(format!("job {id}")))?;
    let mut body = serde_json::to_value(&status).map_err(|e| Error::format("job status", e))?;
    body["job_id"] = json!(id.parse::<usize>().unwrap_or(0));
    Ok(Json(body).into_response())
}

async fn require_token(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.0.options.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return (
                StatusCode::UNAUTHORIZED,
                Json(json!({ "error": "unauthorized", "detail": "missing or wrong bearer token" })),
            )
                .into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> Response {
    HilError::NotFound("no such endpoint".into()).into_response()
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/queries/next", get(next_query))
        .route("/queries/{id}/skip", post(skip_query))
        .route("/labels", post(post_label))
        .route("/classes", get(classes))
        .route("/images/{id}", get(image))
        .route("/progress", get(progress))
        .route("/finetune", post(start_finetune))
        .route("/jobs/{id}", get(job_status))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .nest("/api/v1", api)
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> Result<(), Error> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("listening on http://{addr}/api/v1");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
