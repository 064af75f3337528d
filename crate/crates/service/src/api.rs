//! HTTP/JSON API.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/projects` | multipart: `name`, and `file` (WAV) or `library` (track name); optional `seed` |
//! | GET | `/projects` | project summaries |
//! | GET | `/projects/{id}` | project with elements and placements |
//! | GET | `/library` | WAV files in the library directory |
//! | POST | `/projects/{id}/elements` | multipart: `kind`, `text` or `file`, optional `caption`, `duration_s`, `hint_lo_s` + `hint_hi_s`, `seed` |
//! | PATCH | `/projects/{id}/elements/{eid}` | JSON `{gain?, start_s?, fade_s?, remove?}` |
//! | DELETE | `/projects/{id}/elements/{eid}` | |
//! | GET | `/projects/{id}/elements/{eid}/payload` | the original upload |
//! | POST | `/projects/{id}/render` | renders the current version |
//! | GET | `/projects/{id}/mix.wav` | mix of the current version |
//! | GET | `/projects/{id}/viz.json` | streamgraph model |
//! | GET | `/projects/{id}/viz.svg?width=&height=` | streamgraph as SVG |
//!
//! Errors come back as `{code, message, details}`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use strata_core::placement::{PlacementPlan, TimeWindow};
use strata_core::sonify::{ElementKind, ElementPayload};

use crate::error::ServiceError;
use crate::store::{AddOptions, ElementUpdate, ElementView, LibraryEntry, ProjectStore, ProjectView};

pub const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        Self(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!("{}", self.0);
        }
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::BadRequest(msg.into()))
}

/// Runs engine work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| bad_request(format!("worker failed: {e}")))?
        .map_err(ApiError)
}

pub fn router(store: Arc<ProjectStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project))
        .route("/library", get(list_library))
        .route("/projects/{id}/elements", post(add_element))
        .route("/projects/{id}/elements/{eid}", patch(update_element).delete(delete_element))
        .route("/projects/{id}/elements/{eid}/payload", get(get_payload))
        .route("/projects/{id}/render", post(render))
        .route("/projects/{id}/mix.wav", get(mix_wav))
        .route("/projects/{id}/viz.json", get(viz_json))
        .route("/projects/{id}/viz.svg", get(viz_svg))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Default)]
struct Form {
    fields: HashMap<String, String>,
    files: HashMap<String, (String, Vec<u8>)>,
}

impl Form {
    async fn read(mut multipart: Multipart) -> ApiResult<Self> {
        let mut form = Self::default();
        while let Some(field) = multipart.next_field().await.map_err(|e| bad_request(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_string();
            let file_name = field.file_name().map(str::to_string);
            let bytes = field.bytes().await.map_err(|e| bad_request(e.body_text()))?;
            match file_name {
                Some(file_name) => {
                    form.files.insert(name, (file_name, bytes.to_vec()));
                }
                None => {
                    let text = String::from_utf8(bytes.to_vec())
                        .map_err(|_| bad_request(format!("field {name} is not UTF-8")))?;
                    form.fields.insert(name, text);
                }
            }
        }
        Ok(form)
    }

    fn text(&self, name: &str) -> Option<String> {
        self.fields
            .get(name)
            .cloned()
            .or_else(|| self.files.get(name).and_then(|(_, b)| String::from_utf8(b.clone()).ok()))
            .filter(|s| !s.trim().is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, name: &str) -> ApiResult<Option<T>> {
        self.text(name)
            .map(|v| v.trim().parse().map_err(|_| bad_request(format!("field {name} has invalid value {v:?}"))))
            .transpose()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub version: u64,
    pub duration_s: f64,
    pub element_count: usize,
}

async fn create_project(State(store): State<Arc<ProjectStore>>, multipart: Multipart) -> ApiResult<impl IntoResponse> {
    let form = Form::read(multipart).await?;
    let name = form.text("name").unwrap_or_else(|| "untitled".into());
    let seed = form.parse::<u64>("seed")?;
    let view = match (form.files.get("file"), form.text("library")) {
        (Some((file_name, bytes)), _) => {
            let (file_name, bytes) = (file_name.clone(), bytes.clone());
            blocking(move || Ok(store.create_project(&name, &file_name, &bytes, seed)?.view())).await?
        }
        (None, Some(track)) => blocking(move || Ok(store.create_from_library(&name, &track, seed)?.view())).await?,
        (None, None) => return Err(bad_request("send a `file` part or a `library` field")),
    };
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_projects(State(store): State<Arc<ProjectStore>>) -> ApiResult<Json<Vec<ProjectSummary>>> {
    let summaries = store
        .project_ids()
        .into_iter()
        .filter_map(|id| store.get(&id).ok())
        .map(|p| ProjectSummary {
            id: p.id().to_string(),
            name: p.record.name.clone(),
            version: p.version(),
            duration_s: p.base.duration_s(),
            element_count: p.record.elements.len(),
        })
        .collect();
    Ok(Json(summaries))
}

async fn get_project(State(store): State<Arc<ProjectStore>>, Path(id): Path<String>) -> ApiResult<Json<ProjectView>> {
    Ok(Json(store.get(&id)?.view()))
}

async fn list_library(State(store): State<Arc<ProjectStore>>) -> ApiResult<Json<Vec<LibraryEntry>>> {
    Ok(Json(blocking(move || store.library()).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AddedElement {
    pub element_id: String,
    pub version: u64,
    pub placement: PlacementPlan,
    pub element: ElementView,
}

async fn add_element(
    State(store): State<Arc<ProjectStore>>,
    Path(id): Path<String>,
    multipart: Multipart,
) -> ApiResult<impl IntoResponse> {
    let form = Form::read(multipart).await?;
    let kind: ElementKind = form
        .text("kind")
        .ok_or_else(|| bad_request("missing field `kind`"))?
        .trim()
        .parse()
        .map_err(bad_request)?;
    let file = || form.files.get("file").cloned().ok_or_else(|| bad_request("missing `file` part"));
    let payload = match kind {
        ElementKind::Text => {
            let text = form.fields.get("text").cloned().ok_or_else(|| bad_request("missing field `text`"))?;
            ElementPayload::Text(text)
        }
        ElementKind::Image => {
            let (file_name, bytes) = file()?;
            ElementPayload::Image {
                bytes,
                file_name,
                sidecar_caption: form.text("caption"),
            }
        }
        ElementKind::Audio => {
            let (file_name, bytes) = file()?;
            ElementPayload::Audio { bytes, file_name }
        }
    };
    let hint = match (form.parse::<f64>("hint_lo_s")?, form.parse::<f64>("hint_hi_s")?) {
        (Some(lo), Some(hi)) => Some(TimeWindow::new(lo, hi)),
        (None, None) => None,
        _ => return Err(bad_request("hint needs both `hint_lo_s` and `hint_hi_s`")),
    };
    let options = AddOptions {
        duration_s: form.parse("duration_s")?,
        hint,
        seed: form.parse("seed")?,
    };
    let added = blocking(move || {
        let (project, placement) = store.add_element(&id, payload, options)?;
        let element_id = placement.element_id.clone();
        let element = project
            .view()
            .elements
            .into_iter()
            .find(|e| e.id == element_id)
            .expect("element was just added");
        Ok(AddedElement {
            element_id,
            version: project.version(),
            placement,
            element,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(added)))
}

async fn update_element(
    State(store): State<Arc<ProjectStore>>,
    Path((id, eid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<ProjectView>> {
    let update: ElementUpdate =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid JSON body: {e}")))?;
    Ok(Json(blocking(move || Ok(store.update_element(&id, &eid, update)?.view())).await?))
}

async fn delete_element(
    State(store): State<Arc<ProjectStore>>,
    Path((id, eid)): Path<(String, String)>,
) -> ApiResult<Json<ProjectView>> {
    Ok(Json(blocking(move || Ok(store.remove_element(&id, &eid)?.view())).await?))
}

async fn get_payload(
    State(store): State<Arc<ProjectStore>>,
    Path((id, eid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let (record, bytes) = blocking(move || store.payload(&id, &eid)).await?;
    let mime = match record.kind {
        ElementKind::Text => "text/plain; charset=utf-8",
        ElementKind::Audio => "audio/wav",
        ElementKind::Image => match record.payload_path.rsplit('.').next() {
            Some("png") => "image/png",
            Some("jpg" | "jpeg") => "image/jpeg",
            _ => "application/octet-stream",
        },
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderSummary {
    pub version: u64,
    pub duration_s: f64,
    pub mix_url: String,
    pub viz_url: String,
    pub svg_url: String,
}

async fn render(State(store): State<Arc<ProjectStore>>, Path(id): Path<String>) -> ApiResult<Json<RenderSummary>> {
    let rendered = {
        let (store, id) = (store.clone(), id.clone());
        blocking(move || store.render(&id)).await?
    };
    Ok(Json(RenderSummary {
        version: rendered.version,
        duration_s: rendered.viz.duration_s,
        mix_url: format!("/projects/{id}/mix.wav"),
        viz_url: format!("/projects/{id}/viz.json"),
        svg_url: format!("/projects/{id}/viz.svg"),
    }))
}

async fn mix_wav(State(store): State<Arc<ProjectStore>>, Path(id): Path<String>) -> ApiResult<Response> {
    let rendered = blocking(move || store.render(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], rendered.mix_wav.clone()).into_response())
}

async fn viz_json(State(store): State<Arc<ProjectStore>>, Path(id): Path<String>) -> ApiResult<Response> {
    let rendered = blocking(move || store.render(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], rendered.viz_json.clone()).into_response())
}

#[derive(Debug, Deserialize)]
struct SvgSize {
    width: Option<u32>,
    height: Option<u32>,
}

async fn viz_svg(
    State(store): State<Arc<ProjectStore>>,
    Path(id): Path<String>,
    Query(size): Query<SvgSize>,
) -> ApiResult<Response> {
    let (w, h) = (size.width.unwrap_or(1000), size.height.unwrap_or(300));
    let svg = blocking(move || store.render_svg(&id, w, h)).await?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}
