//! HTTP service for the live session loop: open a session from a query
//! shot, rank exemplars under user weights, pick a style set, then score a
//! batch of candidate shots against it.
//!
//! All bodies are JSON; errors are `{"code", "message"}`.

mod error;
mod state;
pub mod wire;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use captain_core::annotation::load_bundle;
use captain_core::index::Block;
use captain_core::matching::evaluate_shots;
use captain_core::retrieval::{query, UspWeights};
use captain_core::par;
use serde::de::DeserializeOwned;

pub use error::{ApiError, ErrorBody, ServiceError};
pub use state::{AppState, Engine, ServiceConfig, Session, SessionView};
use wire::*;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model", get(model_info).post(load_model))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/rank", post(rank_session))
        .route("/sessions/{id}/style-set", post(set_style))
        .route("/sessions/{id}/shots", post(match_shots))
        .route("/images/{id}", get(get_image))
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::open(config)?;
    if let Some(e) = state.engine() {
        tracing::info!(rows = e.model.len(), "model loaded");
    }
    tracing::info!(images = state.corpus().len(), "corpus indexed");
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// An empty body parses as `T::default()`.
fn parse_or_default<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    parse(body)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn require_engine(state: &AppState) -> ApiResult<std::sync::Arc<Engine>> {
    state.engine().ok_or_else(ApiError::no_model)
}

fn require_session(state: &AppState, id: &str) -> ApiResult<state::SessionHandle> {
    state
        .session(id)
        .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id:?}")))
}

fn persist(state: &AppState, session: &Session) -> ApiResult<()> {
    state.persist(session).map_err(|e| ApiError::internal(e.to_string()))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model: state.engine().map(|e| e.info()),
        corpus_images: state.corpus().len(),
        sessions: state.session_count(),
    })
}

async fn model_info(State(state): State<AppState>) -> ApiResult<Json<ModelInfo>> {
    Ok(Json(require_engine(&state)?.info()))
}

async fn load_model(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<ModelInfo>> {
    let req: LoadModel = parse(&body)?;
    let engine = blocking(move || {
        state
            .load_model(FsPath::new(&req.path))
            .map_err(|e| ApiError::unprocessable("model_load_failed", e.to_string()))
    })
    .await?;
    tracing::info!(rows = engine.model.len(), "model loaded");
    Ok(Json(engine.info()))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let engine = require_engine(&state)?;
    let req: CreateSession = parse(&body)?;
    let corpus = state.corpus();
    let (summary, query) = blocking(move || {
        let map = &engine.decomposer.class_map;
        let bundle = match (req.image_id, req.bundle) {
            (Some(id), None) => match corpus.get(&id) {
                Some(entry) => load_bundle(&entry.dir)?,
                None => {
                    let record = engine
                        .model
                        .record_by_id(&id)
                        .map_err(|_| ApiError::not_found("unknown_image", format!("no image {id:?}")))?;
                    return Ok((DecompositionSummary::from_record(&record, map), record));
                }
            },
            (None, Some(payload)) => payload.decode()?,
            _ => return Err(ApiError::bad_request("send exactly one of image_id and bundle")),
        };
        let d = engine.decomposer.decompose_detailed(&bundle)?;
        Ok((DecompositionSummary::from_decomposition(&d, map), d.record))
    })
    .await?;
    let session = state
        .insert_session(|session_id| Session {
            session_id,
            summary,
            query,
            last_rank: None,
            raw_weights: None,
            rank_generation: 0,
            preferred: Vec::new(),
            ignored: Vec::new(),
            last_shots: None,
        })
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.session_id,
            summary: session.summary,
        }),
    ))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let handle = require_session(&state, &id)?;
    let session = handle.lock().await;
    Ok(Json(SessionView::from(&*session)))
}

fn parse_weights(raw: Option<std::collections::BTreeMap<String, f64>>) -> ApiResult<(UspWeights, [f64; 6])> {
    let Some(raw) = raw else {
        return Ok((UspWeights::uniform(), [1.0; 6]));
    };
    let invalid = |e: captain_core::Error| ApiError::unprocessable("invalid_weights", e.to_string());
    let pairs = raw
        .into_iter()
        .map(|(k, v)| k.parse::<Block>().map(|b| (b, v)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let mut values = [0.0; 6];
    for (b, v) in pairs {
        values[b.index()] = v;
    }
    Ok((UspWeights::new(values).map_err(invalid)?, values))
}

async fn rank_session(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<RankResponse>> {
    let handle = require_session(&state, &id)?;
    let req: RankRequest = parse_or_default(&body)?;
    let (weights, raw) = parse_weights(req.weights)?;
    let top_k = req.top_k.unwrap_or(DEFAULT_TOP_K);
    if top_k == 0 {
        return Err(ApiError::unprocessable("invalid_top_k", "top_k must be at least 1"));
    }
    let engine = require_engine(&state)?;
    let mut session = handle.lock().await;
    if let Some(cached) = &session.last_rank {
        if session.rank_generation == engine.generation && cached.top_k == top_k && cached.weights == weights.to_map() {
            let cached = cached.clone();
            session.raw_weights = Some(raw);
            return Ok(Json(cached));
        }
    }
    let q = session.query.clone();
    let generation = engine.generation;
    let ranked = blocking(move || Ok(query(&engine.model, &q, &weights, top_k)?)).await?;
    let response = RankResponse {
        session_id: session.session_id.clone(),
        weights: weights.to_map(),
        top_k,
        results: ranked.into_iter().map(RankedItem::from).collect(),
    };
    session.last_rank = Some(response.clone());
    session.raw_weights = Some(raw);
    session.rank_generation = generation;
    persist(&state, &session)?;
    Ok(Json(response))
}

fn dedup(ids: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    ids.into_iter().filter(|id| seen.insert(id.clone())).collect()
}

async fn set_style(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<StyleSetResponse>> {
    let handle = require_session(&state, &id)?;
    let req: StyleSetRequest = parse(&body)?;
    let (preferred, ignored) = (dedup(req.preferred), dedup(req.ignored));
    let mut session = handle.lock().await;
    if preferred.is_empty() {
        return Err(ApiError::unprocessable("empty_style_set", "select at least one preferred image"));
    }
    if let Some(both) = preferred.iter().find(|p| ignored.contains(p)) {
        return Err(ApiError::unprocessable("overlap", format!("{both:?} is both preferred and ignored")));
    }
    let shown: BTreeSet<&str> = session
        .last_rank
        .iter()
        .flat_map(|r| r.results.iter().map(|i| i.image_id.as_str()))
        .collect();
    if let Some(unknown) = preferred.iter().chain(&ignored).find(|i| !shown.contains(i.as_str())) {
        return Err(ApiError::unprocessable(
            "unknown_id",
            format!("{unknown:?} is not in the last ranked results"),
        ));
    }
    session.preferred = preferred;
    session.ignored = ignored;
    session.last_shots = None;
    persist(&state, &session)?;
    Ok(Json(StyleSetResponse {
        session_id: session.session_id.clone(),
        preferred: session.preferred.clone(),
        ignored: session.ignored.clone(),
    }))
}

async fn match_shots(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<ShotsResponse>> {
    let handle = require_session(&state, &id)?;
    let mut session = handle.lock().await;
    let weights = match (session.raw_weights, session.preferred.is_empty()) {
        (Some(raw), false) => UspWeights::new(raw)?,
        _ => return Err(ApiError::conflict("no_style_set", "set a style set before submitting shots")),
    };
    let req: ShotsRequest = parse(&body)?;
    if req.shots.is_empty() {
        return Err(ApiError::bad_request("shot batch is empty"));
    }
    let q = req.q.unwrap_or(1.0);
    if !(q >= 1.0 && q.is_finite()) {
        return Err(ApiError::unprocessable("invalid_parameter", format!("q must be a finite value >= 1, got {q}")));
    }
    let bundles = req.shots.iter().map(BundlePayload::decode).collect::<ApiResult<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = bundles.iter().find(|b| !seen.insert(b.image_id.clone())) {
        return Err(ApiError::bad_request(format!("shot id {:?} appears twice", dup.image_id)));
    }
    let engine = require_engine(&state)?;
    let corpus = state.corpus();
    let (preferred, ignored) = (session.preferred.clone(), session.ignored.clone());
    let report = blocking(move || {
        let shots = par::map(&bundles, |b| {
            engine
                .decomposer
                .decompose(b)
                .map(|r| (r, b.dominant_person().cloned()))
        })
        .into_iter()
        .collect::<captain_core::Result<Vec<_>>>()?;
        Ok(evaluate_shots(
            &engine.model,
            &preferred,
            &ignored,
            &shots,
            |id| AppState::skeleton_of(&corpus, id),
            &weights,
            q,
        )?)
    })
    .await?;
    session.last_shots = Some(report.clone());
    persist(&state, &session)?;
    Ok(Json(ShotsResponse {
        session_id: session.session_id.clone(),
        report,
    }))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let missing = || ApiError::not_found("unknown_image", format!("no image file for {id:?}"));
    let path: PathBuf = state
        .corpus()
        .get(&id)
        .and_then(|e| e.image_path.clone())
        .ok_or_else(missing)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}
