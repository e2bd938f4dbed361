//! Route table and handlers.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequestParts, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use groundform_core::answer::{present_answer, suggest_candidates, PresentedCitation};
use groundform_core::chunker::{chunk_personal, ChunkConfig, SourceType};
use groundform_core::condlogic::{evaluate_visibility, FormState};
use groundform_core::fieldmap::{aggregate_field_text, FieldDescriptor, MappingResult};
use groundform_core::index::IndexError;

use crate::auth::TokenPayload;
use crate::edit::{lcs_diff, DiffSpan, MAX_EDIT_BYTES};
use crate::error::ApiError;
use crate::state::{AppState, DocumentStatus};

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;
type Body<T> = Result<Json<T>, JsonRejection>;

pub fn router(state: Arc<AppState>) -> Router {
    // JSON escaping can inflate document text; the handler enforces the exact limit.
    let body_limit = state.cfg.max_document_bytes * 2 + 64 * 1024;
    Router::new()
        .route("/v1/auth/login", post(login))
        .route("/v1/map", post(map))
        .route("/v1/suggest", post(suggest))
        .route("/v1/documents", post(upload_document).get(list_documents))
        .route("/v1/edit", post(edit))
        .route("/v1/profile/snapshot", get(profile_snapshot))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

/// The authenticated caller. Extracted before any body, so bad tokens are
/// rejected before request data is looked at.
pub struct AuthUser(pub String);

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let raw = parts
            .headers
            .get(header::AUTHORIZATION)
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| ApiError::unauthorized("malformed authorization header"))?;
        let token = raw.strip_prefix("Bearer ").ok_or_else(|| ApiError::unauthorized("expected a bearer token"))?;
        let payload = state.signer.verify(token.trim(), state.now()).map_err(|e| ApiError::unauthorized(e.to_string()))?;
        if !state.users.contains_key(&payload.user_id) {
            return Err(ApiError::unauthorized("unknown user"));
        }
        Ok(AuthUser(payload.user_id))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user_id: String,
    pub secret: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub expires_at: u64,
}

async fn login(State(s): State<Shared>, body: Body<LoginRequest>) -> ApiResult<LoginResponse> {
    let Json(req) = body?;
    if s.users.get(&req.user_id) != Some(&req.secret) {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "InvalidCredentials", "unknown user or wrong secret"));
    }
    let expires_at = s.now() + s.cfg.token_ttl_s;
    let token = s.signer.issue(&TokenPayload { user_id: req.user_id, expiry: expires_at });
    Ok(Json(LoginResponse { token, expires_at }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapRequest {
    pub field_descriptor: FieldDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapResponse {
    pub mapping_result: MappingResult,
}

fn checked(d: &FieldDescriptor) -> Result<(), ApiError> {
    d.validate().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MalformedDescriptor", e.to_string()))
}

async fn map(State(s): State<Shared>, AuthUser(_): AuthUser, body: Body<MapRequest>) -> ApiResult<MapResponse> {
    let Json(req) = body?;
    checked(&req.field_descriptor)?;
    Ok(Json(MapResponse { mapping_result: s.mapper.map_field(&req.field_descriptor) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub field: FieldDescriptor,
    #[serde(default)]
    pub form_context: FormState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuggestStatus {
    Suggestions,
    NoData,
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestCandidate {
    pub value: String,
    pub citations: Vec<PresentedCitation>,
    pub source_type: SourceType,
    /// Format rules the value breaks, if any.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub status: SuggestStatus,
    pub field_id: Option<String>,
    pub candidates: Vec<SuggestCandidate>,
}

/// The text a person would read as the question.
fn question_of(d: &FieldDescriptor) -> String {
    [&d.label_text, &d.aria_label, &d.placeholder]
        .into_iter()
        .flatten()
        .find(|t| !t.trim().is_empty())
        .cloned()
        .unwrap_or_else(|| aggregate_field_text(d))
}

/// Read-only: takes the index read lock and never stores anything.
async fn suggest(State(s): State<Shared>, AuthUser(user): AuthUser, body: Body<SuggestRequest>) -> ApiResult<SuggestResponse> {
    let Json(req) = body?;
    checked(&req.field)?;
    let mapping = s.mapper.map_field(&req.field);
    let Some(field) = mapping.field_id.as_deref().and_then(|id| s.schema.get(id)) else {
        return Ok(Json(SuggestResponse { status: SuggestStatus::Unmapped, field_id: None, candidates: vec![] }));
    };
    let visibility = evaluate_visibility(&s.graph, &req.form_context, &s.schema);
    if !visibility.is_visible(&field.id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "FieldHidden", format!("`{}` is hidden by the current answers", field.id)));
    }
    let mut cfg = s.cfg.fill.clone();
    cfg.user = Some(user);
    let index = s.index.read().map_err(|_| ApiError::internal("index lock poisoned"))?;
    let found = suggest_candidates(field, &question_of(&req.field), &index, s.model.as_ref(), &cfg)
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "ModelUnavailable", e.to_string()))?;
    let candidates: Vec<SuggestCandidate> = found
        .into_iter()
        .map(|c| SuggestCandidate {
            citations: present_answer(&c.draft, &index).citations,
            value: c.value,
            source_type: c.source_type,
            violations: c.violations,
        })
        .collect();
    let status = if candidates.is_empty() { SuggestStatus::NoData } else { SuggestStatus::Suggestions };
    Ok(Json(SuggestResponse { status, field_id: Some(field.id.clone()), candidates }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentRequest {
    pub doc_name: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentResponse {
    pub doc_name: String,
    pub chunks_indexed: usize,
    pub status: String,
}

async fn upload_document(State(s): State<Shared>, AuthUser(user): AuthUser, body: Body<DocumentRequest>) -> ApiResult<DocumentResponse> {
    let Json(req) = body?;
    if req.text.len() > s.cfg.max_document_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PayloadTooLarge",
            format!("document is {} bytes; the limit is {}", req.text.len(), s.cfg.max_document_bytes),
        ));
    }
    if req.doc_name.trim().is_empty() {
        return Err(ApiError::bad_request("doc_name is empty"));
    }
    let mut docs = s.documents.lock().map_err(|_| ApiError::internal("document list lock poisoned"))?;
    let mine = docs.entry(user.clone()).or_default();
    if mine.iter().any(|d| d.doc_name == req.doc_name && d.status != "failed") {
        return Err(ApiError::new(StatusCode::CONFLICT, "DuplicateDocument", format!("`{}` is already uploaded", req.doc_name)));
    }
    mine.retain(|d| d.doc_name != req.doc_name);
    mine.push(DocumentStatus { doc_name: req.doc_name.clone(), status: "processing".into(), chunks_indexed: 0, uploaded_at: s.now() });

    let chunks = chunk_personal(&user, &req.doc_name, &req.text, &ChunkConfig::default(), s.clock.now_utc());
    let result = s.index.write().map_err(|_| ApiError::internal("index lock poisoned"))?.index_chunks(chunks);
    let entry = mine.last_mut().expect("just pushed");
    match result {
        Ok(stats) => {
            entry.status = "indexed".into();
            entry.chunks_indexed = stats.added;
            tracing::info!(user = %user, doc = %req.doc_name, chunks = stats.added, "document indexed");
            Ok(Json(DocumentResponse { doc_name: req.doc_name, chunks_indexed: stats.added, status: entry.status.clone() }))
        }
        Err(e) => {
            entry.status = "failed".into();
            let code = if matches!(e, IndexError::DuplicateId(_)) { "DuplicateDocument" } else { "IndexFailed" };
            Err(ApiError::new(StatusCode::CONFLICT, code, e.to_string()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentList {
    pub documents: Vec<DocumentStatus>,
}

async fn list_documents(State(s): State<Shared>, AuthUser(user): AuthUser) -> ApiResult<DocumentList> {
    let docs = s.documents.lock().map_err(|_| ApiError::internal("document list lock poisoned"))?;
    Ok(Json(DocumentList { documents: docs.get(&user).cloned().unwrap_or_default() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    pub selected_text: String,
    pub instruction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditResponse {
    /// Returned unchanged; the revision is only a proposal.
    pub original_text: String,
    pub revised_text: String,
    pub diff: Vec<DiffSpan>,
}

async fn edit(State(s): State<Shared>, AuthUser(_): AuthUser, body: Body<EditRequest>) -> ApiResult<EditResponse> {
    let Json(req) = body?;
    if req.selected_text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "EmptySelection", "selected_text is empty"));
    }
    if req.selected_text.len() > MAX_EDIT_BYTES {
        return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "PayloadTooLarge", format!("selection exceeds {MAX_EDIT_BYTES} bytes")));
    }
    let revised_text = s.reviser.revise(&req.selected_text, &req.instruction);
    let diff = lcs_diff(&req.selected_text, &revised_text);
    Ok(Json(EditResponse { original_text: req.selected_text, revised_text, diff }))
}

async fn profile_snapshot(AuthUser(_): AuthUser) -> ApiError {
    ApiError::new(StatusCode::NOT_IMPLEMENTED, "NotImplemented", "profile snapshots are reserved for a later version")
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}
