//! Triage HTTP API. Bodies are JSON documents; errors are `{"error": ...}`.

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use repairbot::archive::{compute_statistics, taxonomy_percentages};
use repairbot::model::{TimeWindow, Verdict};
use repairbot::pipeline::{response_times, Bot, HookDecision, PipelineError, TriageError};

#[derive(Clone)]
pub struct AppState {
    pub bot: Arc<Bot>,
    pub token: Option<String>,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> Self {
        let code = match &e {
            TriageError::NotFound(_) => StatusCode::NOT_FOUND,
            TriageError::Conflict { .. } => StatusCode::CONFLICT,
            TriageError::Invalid(_) => StatusCode::BAD_REQUEST,
            TriageError::Forbidden(_) => StatusCode::FORBIDDEN,
            TriageError::Failed(_) | TriageError::Archive(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

/// Runs blocking archive or git work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(internal)?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/patches", get(list_patches))
        .route("/patches/:id", get(get_patch))
        .route("/patches/:id/verdict", post(post_verdict))
        .route("/patches/:id/propose", post(post_propose))
        .route("/stats", get(stats))
        .route("/hooks", post(hook))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(format!("Bearer {token}").as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong token".into()).into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
}

fn parse_verdict(s: &str) -> Result<Verdict, ApiError> {
    serde_json::from_value(json!(s)).map_err(|_| ApiError(StatusCode::BAD_REQUEST, format!("unknown status `{s}`")))
}

async fn list_patches(State(s): State<AppState>, Query(q): Query<ListQuery>) -> Result<Response, ApiError> {
    let status = match q.status.as_deref() {
        None | Some("all") => None,
        Some(v) => Some(parse_verdict(v)?),
    };
    let views = blocking(move || s.bot.patches(status).map_err(internal)).await?;
    Ok(Json(views).into_response())
}

async fn get_patch(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = blocking(move || s.bot.patch(&id).map_err(internal)).await?;
    match view {
        Some(v) => Ok(Json(v).into_response()),
        None => Err(ApiError(StatusCode::NOT_FOUND, "no such patch".into())),
    }
}

#[derive(Deserialize)]
struct VerdictBody {
    verdict: String,
    analyst_id: String,
    #[serde(default)]
    note: String,
}

async fn post_verdict(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<VerdictBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let verdict = parse_verdict(&body.verdict)?;
    if body.analyst_id.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "analyst_id is required".into()));
    }
    let t = blocking(move || Ok(s.bot.record_verdict(&id, verdict, &body.analyst_id, &body.note)?)).await?;
    Ok(Json(t).into_response())
}

async fn post_propose(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let p = blocking(move || Ok(s.bot.propose(&id)?)).await?;
    Ok(Json(p).into_response())
}

async fn stats(State(s): State<AppState>) -> Result<Response, ApiError> {
    blocking(move || {
        let records = s.bot.archive().records().map_err(internal)?;
        let stats = compute_statistics(&records, TimeWindow::all(), "all");
        let shares = taxonomy_percentages(&stats).map(|p| p.map(|x| x.as_f64()));
        Ok(Json(json!({ "stats": stats, "taxonomy_percent": shares, "response_times": response_times(&records) }))
            .into_response())
    })
    .await
}

async fn hook(State(s): State<AppState>, body: String) -> Result<Response, ApiError> {
    let bot = s.bot.clone();
    let decision = blocking(move || match bot.handle_hook_json(&body) {
        Ok(d) => Ok(d),
        Err(PipelineError::BadEvent(e)) => Err(ApiError(StatusCode::BAD_REQUEST, e)),
        Err(e) => Err(internal(e)),
    })
    .await?;
    let code = if decision == HookDecision::Accepted {
        let bot = s.bot.clone();
        tokio::task::spawn_blocking(move || {
            for r in bot.drain_hooks() {
                if let Err(e) = r {
                    log::warn!("hook run failed: {e}");
                }
            }
        });
        StatusCode::ACCEPTED
    } else {
        StatusCode::OK
    };
    Ok((code, Json(decision)).into_response())
}
