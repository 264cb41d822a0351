//! HTTP annotation service: one session per uploaded image, scribble rounds
//! refined by a configurable predictor, sessions persisted as directories.
//!
//! | method | path                       | result                                        |
//! |--------|----------------------------|-----------------------------------------------|
//! | POST   | `/sessions`                | multipart `image` (+ `predictor`) → 201 `{id}` |
//! | GET    | `/sessions/{id}/prediction`| latest output, `OBFMAP01` (`?format=png`: mask) |
//! | POST   | `/sessions/{id}/scribbles` | scribble document → `{round}` (`?async=true`: 202 `{token}`) |
//! | GET    | `/jobs/{token}`            | status of an asynchronous submission          |
//! | GET    | `/sessions/{id}/ob`        | thin OB mask PNG                              |
//! | POST   | `/sessions/{id}/export`    | tar: `ob.png`, `segments.json`, `history.json` |
//! | GET    | `/healthz`                 | `ok`                                          |

mod error;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use obkit_core::interaction::{postprocess, refine, ScribbleDocument};
use obkit_core::predictors::{PredictorInput, PredictorSpec, SampleContext};
use obkit_core::raster::{io, trace_segments, ThresholdConfig};
use obkit_core::simulate::{derive_seed, SimulationConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::OwnedMutexGuard;

pub use error::ApiError;
pub use store::{SessionMeta, SessionStore, StoredRound};

const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sessions_dir: PathBuf,
    pub default_predictor: PredictorSpec,
    pub threshold: ThresholdConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done { round: usize },
    Failed { code: u16, error: String },
}

struct Inner {
    config: ServiceConfig,
    store: SessionStore,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens (and recovers) the session directory.
    pub fn open(config: ServiceConfig) -> Result<Self, ApiError> {
        let store = SessionStore::open(config.sessions_dir.clone())?;
        Ok(Self(Arc::new(Inner {
            config,
            store,
            locks: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
        })))
    }

    pub fn store(&self) -> &SessionStore {
        &self.0.store
    }

    async fn lock(&self, id: &str) -> Result<OwnedMutexGuard<()>, ApiError> {
        if uuid::Uuid::parse_str(id).is_err() || !self.0.store.exists(id) {
            return Err(ApiError::not_found(format!("unknown session {id}")));
        }
        let m = {
            let mut locks = self.0.locks.lock().expect("lock table poisoned");
            locks.entry(id.to_string()).or_default().clone()
        };
        Ok(m.lock_owned().await)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/prediction", get(get_prediction))
        .route("/sessions/{id}/scribbles", post(submit_scribbles))
        .route("/sessions/{id}/ob", get(get_ob))
        .route("/sessions/{id}/export", post(export_session))
        .route("/jobs/{token}", get(get_job))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(config).map_err(|e| std::io::Error::other(e.message))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}

fn sample_context<'a>(meta: &'a SessionMeta, rgb: &'a image::RgbImage) -> SampleContext<'a> {
    SampleContext {
        id: &meta.source,
        rgb: Some(rgb),
        seed: meta.seed,
        fp_clearance: SimulationConfig::default().scribble_reach(),
    }
}

#[derive(Serialize)]
struct Created {
    id: String,
    width: usize,
    height: usize,
    prediction: String,
}

async fn create_session(State(state): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut image_bytes: Option<(Bytes, String)> = None;
    let mut predictor: Option<String> = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed upload: {e}")))?
    {
        match field.name() {
            Some("image") => {
                let name = field.file_name().unwrap_or("image").to_string();
                let bytes = field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::bad_request(format!("malformed upload: {e}")))?;
                image_bytes = Some((bytes, name));
            }
            Some("predictor") => {
                predictor = Some(
                    field
                        .text()
                        .await
                        .map_err(|e| ApiError::bad_request(format!("malformed upload: {e}")))?,
                );
            }
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let (bytes, file_name) = image_bytes.ok_or_else(|| ApiError::bad_request("missing image field"))?;
    let rgb = io::decode_rgb(&bytes).map_err(|e| ApiError::bad_request(format!("undecodable image: {e}")))?;
    let spec = match predictor {
        Some(text) => text
            .parse::<PredictorSpec>()
            .map_err(|e| ApiError::unprocessable(format!("invalid predictor: {e}")))?,
        None => state.0.config.default_predictor.clone(),
    };
    let id = uuid::Uuid::new_v4().to_string();
    let source = std::path::Path::new(&file_name)
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    let meta = SessionMeta {
        seed: derive_seed(state.0.config.seed, &source),
        id: id.clone(),
        predictor: spec.to_string(),
        source,
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        threshold: state.0.config.threshold,
        rounds: 0,
    };
    let st = state.clone();
    let created = blocking(move || {
        let predictor = spec
            .instantiate(&sample_context(&meta, &rgb))
            .map_err(|e| ApiError::unprocessable(format!("invalid predictor: {e}")))?;
        let raw = predictor.predict(&PredictorInput::initial(Some(rgb.clone()), meta.width, meta.height))?;
        raw.same_dims((meta.width, meta.height))?;
        let initial = postprocess(&raw, &meta.threshold);
        st.0.store.create(&meta, &rgb, &initial)?;
        Ok(Created {
            prediction: format!("/sessions/{}/prediction", meta.id),
            id: meta.id,
            width: meta.width,
            height: meta.height,
        })
    })
    .await?;
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_prediction(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
) -> Result<Response, ApiError> {
    let _guard = state.lock(&id).await?;
    let meta = state.0.store.load_meta(&id)?;
    match q.format.as_deref() {
        None | Some("obfmap") => {
            let map = state.0.store.load_current(&meta)?;
            Ok(([(header::CONTENT_TYPE, "application/octet-stream")], io::encode_obfmap(&map)).into_response())
        }
        Some("png") => Ok(png_response(io::encode_mask_png(&state.0.store.current_ob(&meta)?))),
        Some(other) => Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    }
}

async fn get_ob(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let _guard = state.lock(&id).await?;
    let meta = state.0.store.load_meta(&id)?;
    Ok(png_response(io::encode_mask_png(&state.0.store.current_ob(&meta)?)))
}

/// Runs one refinement round and commits it; returns the new round number.
fn run_round(state: &AppState, id: &str, doc: &ScribbleDocument) -> Result<usize, ApiError> {
    let store = &state.0.store;
    let mut meta = store.load_meta(id)?;
    let prev = store.load_current(&meta)?;
    let fnfp = doc.rasterize(meta.width, meta.height);
    let output = if fnfp.is_empty() {
        prev
    } else {
        let rgb = store.load_rgb(id)?;
        let spec: PredictorSpec = meta
            .predictor
            .parse()
            .map_err(|e| ApiError::internal(format!("stored predictor: {e}")))?;
        let predictor = spec.instantiate(&sample_context(&meta, &rgb))?;
        let input = PredictorInput {
            rgb: Some(rgb),
            fnfp: fnfp.clone(),
            prev: prev.clone(),
        };
        let candidate = predictor.predict(&input)?;
        postprocess(&refine(&prev, &candidate, &fnfp)?, &meta.threshold)
    };
    store.append_round(&mut meta, doc, &fnfp, &output)?;
    Ok(meta.rounds)
}

#[derive(Deserialize)]
struct SubmitQuery {
    #[serde(default, rename = "async")]
    asynchronous: bool,
}

async fn submit_scribbles(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SubmitQuery>,
    body: String,
) -> Result<Response, ApiError> {
    let guard = state.lock(&id).await?;
    let doc = ScribbleDocument::parse(&body).map_err(|e| ApiError::unprocessable(format!("malformed scribbles: {e}")))?;
    if q.asynchronous {
        let token = uuid::Uuid::new_v4().to_string();
        state
            .0
            .jobs
            .lock()
            .expect("job table poisoned")
            .insert(token.clone(), JobStatus::Pending);
        let st = state.clone();
        let tok = token.clone();
        tokio::spawn(async move {
            let worker = st.clone();
            let result = blocking(move || run_round(&worker, &id, &doc)).await;
            drop(guard);
            let status = match result {
                Ok(round) => JobStatus::Done { round },
                Err(e) => JobStatus::Failed {
                    code: e.status.as_u16(),
                    error: e.message,
                },
            };
            st.0.jobs.lock().expect("job table poisoned").insert(tok, status);
        });
        return Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "token": token }))).into_response());
    }
    let st = state.clone();
    let round = blocking(move || run_round(&st, &id, &doc)).await?;
    drop(guard);
    Ok(Json(serde_json::json!({ "round": round })).into_response())
}

async fn get_job(State(state): State<AppState>, Path(token): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    state
        .0
        .jobs
        .lock()
        .expect("job table poisoned")
        .get(&token)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {token}")))
}

#[derive(Serialize)]
struct HistoryRound<'a> {
    round: usize,
    scribbles: &'a ScribbleDocument,
    fn_pixels: usize,
    fp_pixels: usize,
    ob_pixels: usize,
}

#[derive(Serialize)]
struct History<'a> {
    id: &'a str,
    predictor: &'a str,
    width: usize,
    height: usize,
    threshold: ThresholdConfig,
    rounds: Vec<HistoryRound<'a>>,
}

fn tar_entry(builder: &mut tar::Builder<Vec<u8>>, name: &str, bytes: &[u8]) -> Result<(), ApiError> {
    let mut header = tar::Header::new_ustar();
    header.set_size(bytes.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_cksum();
    builder
        .append_data(&mut header, name, bytes)
        .map_err(|e| ApiError::internal(e.to_string()))
}

/// Tar archive of the latest OB mask, its traced segments and the round
/// history. Identical session state gives identical bytes.
pub fn export_archive(store: &SessionStore, id: &str) -> Result<Vec<u8>, ApiError> {
    let meta = store.load_meta(id)?;
    if meta.rounds == 0 {
        return Err(ApiError::conflict("session has no rounds yet"));
    }
    let ob = store.current_ob(&meta)?;
    let segments: Vec<Vec<[i32; 2]>> = trace_segments(&ob)?
        .iter()
        .map(|s| s.points().iter().map(|p| [p.x, p.y]).collect())
        .collect();
    let stored: Vec<StoredRound> = (1..=meta.rounds)
        .map(|n| store.load_round(id, n))
        .collect::<Result<_, _>>()?;
    let history = History {
        id: &meta.id,
        predictor: &meta.predictor,
        width: meta.width,
        height: meta.height,
        threshold: meta.threshold,
        rounds: stored
            .iter()
            .enumerate()
            .map(|(i, r)| HistoryRound {
                round: i + 1,
                scribbles: &r.scribbles,
                fn_pixels: r.fnfp.fn_channel.count_ones(),
                fp_pixels: r.fnfp.fp_channel.count_ones(),
                ob_pixels: obkit_core::interaction::boundary_mask(&r.output, &meta.threshold).count_ones(),
            })
            .collect(),
    };
    let mut builder = tar::Builder::new(Vec::new());
    tar_entry(&mut builder, "ob.png", &io::encode_mask_png(&ob))?;
    tar_entry(
        &mut builder,
        "segments.json",
        serde_json::to_string(&serde_json::json!({ "segments": segments }))
            .expect("segments serialize")
            .as_bytes(),
    )?;
    tar_entry(
        &mut builder,
        "history.json",
        serde_json::to_string_pretty(&history).expect("history serializes").as_bytes(),
    )?;
    builder.into_inner().map_err(|e| ApiError::internal(e.to_string()))
}

async fn export_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let _guard = state.lock(&id).await?;
    let st = state.clone();
    let bytes = blocking(move || export_archive(&st.0.store, &id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-tar")], bytes).into_response())
}
