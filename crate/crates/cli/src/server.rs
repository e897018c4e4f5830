//! JSON API over the review state, versioned under `/v1`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::review::{BundleSummary, DecisionRequest, ReviewError, ReviewService, ReviewStatus, SuggestionBundle, SuggestionView};

pub struct ApiError(ReviewError);

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ReviewError::NotFound { .. } => StatusCode::NOT_FOUND,
            ReviewError::Conflict { .. } => StatusCode::CONFLICT,
            ReviewError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Store(_) | ReviewError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": self.0.to_string() });
        if let ReviewError::Conflict { status: current, .. } = &self.0 {
            body["current_status"] = json!(current);
        }
        (status, Json(body)).into_response()
    }
}

type Api<T> = Result<Json<T>, ApiError>;

async fn list_bundles(State(svc): State<Arc<ReviewService>>) -> Json<Vec<BundleSummary>> {
    Json(svc.bundles())
}

async fn get_bundle(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> Api<SuggestionBundle> {
    Ok(Json(svc.bundle(&id)?))
}

async fn get_suggestion(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> Api<SuggestionView> {
    Ok(Json(svc.suggestion(&id)?))
}

#[derive(Deserialize)]
struct DecideParams {
    #[serde(default)]
    overwrite: bool,
}

async fn decide(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    Query(params): Query<DecideParams>,
    Json(req): Json<DecisionRequest>,
) -> Api<SuggestionView> {
    Ok(Json(svc.decide(&id, req, params.overwrite)?))
}

#[derive(Deserialize)]
struct ExportParams {
    status: Option<String>,
}

async fn export(State(svc): State<Arc<ReviewService>>, Query(params): Query<ExportParams>) -> Api<Vec<SuggestionView>> {
    let status = params
        .status
        .map(|s| s.parse::<ReviewStatus>())
        .transpose()
        .map_err(|e| ApiError(ReviewError::Invalid(e)))?;
    Ok(Json(svc.export(status)))
}

async fn require_token(State(token): State<Arc<String>>, request: Request, next: Next) -> Response {
    let expected = format!("Bearer {token}");
    let given = request.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    if given == Some(expected.as_str()) {
        next.run(request).await
    } else {
        (StatusCode::UNAUTHORIZED, Json(json!({ "error": "missing or invalid bearer token" }))).into_response()
    }
}

/// The API router; static review assets are served from `static_dir` at
/// the root when given.
pub fn router(service: Arc<ReviewService>, token: Option<String>, static_dir: Option<PathBuf>) -> Router {
    let mut api = Router::new()
        .route("/bundles", get(list_bundles))
        .route("/bundles/:id", get(get_bundle))
        .route("/suggestions/:id", get(get_suggestion))
        .route("/suggestions/:id/decision", post(decide))
        .route("/export", get(export))
        .with_state(service);
    if let Some(token) = token {
        api = api.layer(middleware::from_fn_with_state(Arc::new(token), require_token));
    }
    let app = Router::new().nest("/v1", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
