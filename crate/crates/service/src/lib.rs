//! HTTP service for human and machine optimization campaigns, trajectory
//! downloads and a leaderboard of published runs.

pub mod auth;
pub mod error;
pub mod leaderboard;
pub mod state;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

pub use error::ApiError;
pub use leaderboard::{build_leaderboard, rank_entries, LeaderboardEntry};
pub use state::{ServiceConfig, ServiceState};

type Shared = Arc<ServiceState>;

fn token(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(auth::bearer)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/datasets", post(register_dataset).get(list_datasets))
        .route("/datasets/{id}", get(get_dataset))
        .route("/campaigns", post(create_campaign).get(list_campaigns))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/suggestions", post(submit_suggestion))
        .route("/campaigns/{id}/publish", post(publish))
        .route("/leaderboard", get(leaderboard))
        .route("/trajectories/{id}", get(download_trajectory))
        .with_state(state)
}

async fn register_dataset(State(s): State<Shared>, headers: HeaderMap, body: String) -> Result<Response, ApiError> {
    s.authenticate(token(&headers), None)?;
    let summary = s.register_dataset(&body)?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn list_datasets(State(s): State<Shared>) -> Response {
    Json(s.list_datasets()).into_response()
}

async fn get_dataset(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.dataset(&id)?.to_json_value()).into_response())
}

async fn create_campaign(State(s): State<Shared>, headers: HeaderMap, body: String) -> Result<Response, ApiError> {
    let request = ServiceState::parse_create(&body)?;
    let author = s.authenticate(token(&headers), request.author.as_deref())?;
    let view = s.create_campaign(request, author)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list_campaigns(State(s): State<Shared>) -> Response {
    Json(s.list_campaigns()).into_response()
}

async fn get_campaign(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.get_campaign(&id)?).into_response())
}

async fn submit_suggestion(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: String,
) -> Result<Response, ApiError> {
    let submission = ServiceState::parse_submission(&body)?;
    let author = match s.requires_auth() {
        true => Some(s.authenticate(token(&headers), None)?),
        false => None,
    };
    Ok(Json(s.submit_suggestion(&id, submission, author.as_deref())?).into_response())
}

async fn publish(State(s): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let author = s.authenticate(token(&headers), None)?;
    let entries = s.publish(&id, &author)?;
    Ok(Json(json!({"published": id, "leaderboard": entries})).into_response())
}

#[derive(Debug, Deserialize)]
struct LeaderboardQuery {
    dataset: Option<String>,
}

async fn leaderboard(State(s): State<Shared>, Query(q): Query<LeaderboardQuery>) -> Response {
    Json(s.leaderboard(q.dataset.as_deref())).into_response()
}

/// Same bytes the CLI writes to disk.
async fn download_trajectory(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let t = s.trajectory(&id)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        t.to_json_string(),
    )
        .into_response())
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
