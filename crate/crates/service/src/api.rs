use std::path::Path;
use std::sync::Arc;

use arealink_core::catalog::{CatalogError, CatalogFilter, CatalogStore};
use arealink_core::linkage::{parse_cohort, validate_selection, KeySpec, LinkError, LinkSelection, ResolverContext, SelectionEntry};
use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::{DefaultBodyLimit, FromRequestParts, Path as UrlPath, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::auth::TokenStore;
use crate::manager::TaskManager;
use crate::task::{TaskDetail, TaskRow};
use crate::ServiceError;

#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<TaskManager>,
    pub tokens: Arc<TokenStore>,
    pub store: Arc<CatalogStore>,
    pub ctx: Arc<ResolverContext>,
    pub wake: Arc<Notify>,
    pub max_upload_bytes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ServiceError::Unauthorized => (StatusCode::UNAUTHORIZED, "Unauthorized"),
            ServiceError::PayloadTooLarge(_) => (StatusCode::PAYLOAD_TOO_LARGE, "PayloadTooLarge"),
            ServiceError::InvalidSelection(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidSelection"),
            ServiceError::MalformedUpload(_) => (StatusCode::BAD_REQUEST, "MalformedUpload"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "NotFound"),
            ServiceError::NotReady { .. } => (StatusCode::CONFLICT, "NotReady"),
            ServiceError::Gone(_) => (StatusCode::GONE, "Gone"),
            ServiceError::IllegalTransition { .. } | ServiceError::Io(_) | ServiceError::Config(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "Internal")
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        let message = if status.is_server_error() {
            log::error!("{self}");
            "internal error".to_string()
        } else {
            self.to_string()
        };
        (status, Json(ErrorBody { code: code.into(), message })).into_response()
    }
}

/// Authenticated caller identity.
pub struct Owner(pub String);

impl FromRequestParts<AppState> for Owner {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let header = parts.headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).ok_or(ServiceError::Unauthorized)?;
        state.tokens.identify(header).map(|o| Owner(o.to_string())).ok_or(ServiceError::Unauthorized)
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Io(format!("blocking task: {e}")))?
}

pub fn router(state: AppState) -> Router {
    let limit = state.max_upload_bytes;
    Router::new()
        .route("/api/tasks", get(list_tasks).post(submit_task))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/download", get(download))
        .route("/api/catalog", get(list_catalog))
        .route("/api/catalog/{id}/variables", get(list_variables))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Accepts `{"entries": [...]}` or a bare entry list.
pub fn parse_selection(text: &str) -> Result<LinkSelection, ServiceError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Wrapped(LinkSelection),
        Bare(Vec<SelectionEntry>),
    }
    match serde_json::from_str::<Raw>(text) {
        Ok(Raw::Wrapped(s)) => Ok(s),
        Ok(Raw::Bare(entries)) => Ok(LinkSelection::new(entries)),
        Err(e) => Err(ServiceError::InvalidSelection(format!("selection JSON: {e}"))),
    }
}

fn multipart_err(e: MultipartError, limit: usize) -> ServiceError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ServiceError::PayloadTooLarge(limit)
    } else {
        ServiceError::MalformedUpload(e.body_text())
    }
}

fn is_upload_fault(e: &LinkError) -> bool {
    matches!(
        e,
        LinkError::EmptyFile
            | LinkError::NoKeyColumns(_)
            | LinkError::AmbiguousKeys { .. }
            | LinkError::MissingKeyColumn(_)
            | LinkError::MultipleCsvInZip(_)
            | LinkError::NoCsvInZip
            | LinkError::MalformedCohort(_)
    )
}

#[derive(Serialize)]
struct Submitted {
    task_id: String,
    status: crate::task::TaskStatus,
}

async fn submit_task(
    State(state): State<AppState>,
    Owner(owner): Owner,
    headers: HeaderMap,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<(StatusCode, Json<Submitted>), ServiceError> {
    let limit = state.max_upload_bytes;
    let declared = headers.get(header::CONTENT_LENGTH).and_then(|v| v.to_str().ok()).and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > limit) {
        return Err(ServiceError::PayloadTooLarge(limit));
    }
    let mut multipart = multipart.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ServiceError::PayloadTooLarge(limit)
        } else {
            ServiceError::MalformedUpload(e.body_text())
        }
    })?;
    let (mut file, mut selection) = (None, None);
    while let Some(field) = multipart.next_field().await.map_err(|e| multipart_err(e, limit))? {
        match field.name() {
            Some("file") => {
                let name = field.file_name().and_then(|n| Path::new(n).file_name()).and_then(|n| n.to_str());
                let name = name.filter(|n| !n.is_empty()).unwrap_or("upload.csv").to_string();
                let bytes = field.bytes().await.map_err(|e| multipart_err(e, limit))?;
                file = Some((name, bytes));
            }
            Some("selection") => {
                let text = field.text().await.map_err(|e| multipart_err(e, limit))?;
                selection = Some(parse_selection(&text)?);
            }
            _ => {}
        }
    }
    let (filename, bytes) = file.ok_or_else(|| ServiceError::MalformedUpload("missing multipart field \"file\"".into()))?;
    let selection = selection.ok_or_else(|| ServiceError::InvalidSelection("missing multipart field \"selection\"".into()))?;

    let (store, ctx, manager) = (state.store.clone(), state.ctx.clone(), state.manager.clone());
    let task = blocking(move || {
        let cohort = parse_cohort(&bytes, &KeySpec::Auto).map_err(|e| ServiceError::MalformedUpload(e.to_string()))?;
        validate_selection(&cohort, &selection, &store, &ctx).map_err(|e| {
            if is_upload_fault(&e) {
                ServiceError::MalformedUpload(e.to_string())
            } else {
                ServiceError::InvalidSelection(e.to_string())
            }
        })?;
        manager.submit(&owner, &filename, &bytes, selection)
    })
    .await?;
    state.wake.notify_one();
    Ok((StatusCode::ACCEPTED, Json(Submitted { task_id: task.task_id, status: task.status })))
}

async fn list_tasks(State(state): State<AppState>, Owner(owner): Owner) -> Result<Json<Vec<TaskRow>>, ServiceError> {
    let m = state.manager.clone();
    let tasks = blocking(move || m.list(&owner)).await?;
    Ok(Json(tasks.iter().map(TaskRow::from).collect()))
}

async fn get_task(
    State(state): State<AppState>,
    Owner(owner): Owner,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<TaskDetail>, ServiceError> {
    let m = state.manager.clone();
    let t = blocking(move || m.get(&owner, &id)).await?;
    Ok(Json(TaskDetail::from(&t)))
}

async fn download(State(state): State<AppState>, Owner(owner): Owner, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let m = state.manager.clone();
    let tid = id.clone();
    let path = blocking(move || m.download_path(&owner, &tid)).await?;
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        // swept between the check and the read
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::Gone(id)),
        Err(e) => return Err(ServiceError::Io(format!("{}: {e}", path.display()))),
    };
    let disposition = format!("attachment; filename=\"{id}.zip\"");
    Ok(([(header::CONTENT_TYPE, "application/zip".to_string()), (header::CONTENT_DISPOSITION, disposition)], bytes).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct CatalogQuery {
    scale: Option<String>,
    year: Option<String>,
    domain: Option<String>,
}

fn parse_opt<T: std::str::FromStr>(field: &str, v: Option<&str>) -> Result<Option<T>, ServiceError>
where
    T::Err: std::fmt::Display,
{
    match v.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|e| ServiceError::BadRequest(format!("{field}: {e}"))),
    }
}

fn catalog_err(e: CatalogError) -> ServiceError {
    match e {
        CatalogError::UnknownDataset(id) => ServiceError::NotFound(id),
        other => ServiceError::Io(other.to_string()),
    }
}

async fn list_catalog(
    State(state): State<AppState>,
    Owner(_): Owner,
    Query(q): Query<CatalogQuery>,
) -> Result<Response, ServiceError> {
    let filter = CatalogFilter {
        scale: parse_opt("scale", q.scale.as_deref())?,
        year: parse_opt("year", q.year.as_deref())?,
        domain: parse_opt("domain", q.domain.as_deref())?,
    };
    let store = state.store.clone();
    let list = blocking(move || store.list_catalog(&filter).map_err(catalog_err)).await?;
    Ok(Json(list).into_response())
}

async fn list_variables(State(state): State<AppState>, Owner(_): Owner, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let store = state.store.clone();
    let vars = blocking(move || store.variables(&id).map_err(catalog_err)).await?;
    Ok(Json(vars).into_response())
}
