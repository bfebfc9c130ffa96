//! HTTP API for the review step.
//!
//! Reads come from persisted stage outputs and the ledger file; every
//! ledger write goes through one lock, so readers always see a complete
//! prefix of the chain.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::RwLock;

use crate::checklist::{Arm, LockStore, LockedChecklist};
use crate::evaluator::ConflictCandidate;
use crate::hash::ContentHash;
use crate::ingest::BundleStore;
use crate::ledger::{
    append_entry, apply_corrections, ledger_summary, AppendContext, EntryDraft, LedgerEntry, LedgerError,
    LedgerStore, ReviewQueueItem,
};
use crate::model::RunRecord;
use crate::config::RunConfig;
use crate::pipeline::{
    cells_report, read_details, read_probes, read_queue, read_records, scored_path, valid_checklist_hashes,
    AssignmentDetail, CellsReport, PipelineError,
};

pub const MEDIA_KIND_HEADER: &str = "x-media-kind";

/// Everything the API serves, loaded once at startup.
pub struct ApiState {
    store: BundleStore,
    locks: LockStore,
    ledger: LedgerStore,
    records: BTreeMap<String, RunRecord>,
    details: BTreeMap<String, AssignmentDetail>,
    probes: BTreeMap<String, Vec<ConflictCandidate>>,
    queue: Vec<ReviewQueueItem>,
    valid_checklists: BTreeSet<ContentHash>,
    token: Option<String>,
    /// Readers hold it shared; the single ledger writer holds it exclusively.
    ledger_lock: RwLock<()>,
}

impl ApiState {
    pub fn load(cfg: &RunConfig, token: Option<String>) -> Result<Self, PipelineError> {
        let records = read_records(&scored_path(cfg))?
            .into_iter()
            .map(|r| (r.record_id.clone(), r))
            .collect();
        let mut probes: BTreeMap<String, Vec<ConflictCandidate>> = BTreeMap::new();
        for p in read_probes(cfg)? {
            probes.entry(p.record_id.clone()).or_default().push(p);
        }
        Ok(ApiState {
            store: BundleStore::new(&cfg.store_root),
            locks: LockStore::new(&cfg.lock_dir),
            ledger: LedgerStore::new(&cfg.ledger_path),
            records,
            details: read_details(cfg)?.into_iter().map(|d| (d.record_id.clone(), d)).collect(),
            probes,
            queue: read_queue(cfg)?,
            valid_checklists: valid_checklist_hashes(cfg)?,
            token: token.filter(|t| !t.is_empty()),
            ledger_lock: RwLock::new(()),
        })
    }

    fn scored(&self) -> Vec<RunRecord> {
        self.records.values().cloned().collect()
    }

    fn checklists_for(&self, r: &RunRecord) -> Vec<LockedChecklist> {
        let arms: &[Option<Arm>] = if r.paired {
            &[Some(Arm::Benign), Some(Arm::Injected), None]
        } else {
            &[None]
        };
        arms.iter()
            .filter_map(|arm| self.locks.load(&r.cell.benchmark_id, &r.case_id, *arm).ok().flatten())
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct FieldError {
    field: String,
    message: String,
}

enum ApiError {
    NotFound(String),
    Unprocessable(Vec<FieldError>),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::NotFound(what) => (StatusCode::NOT_FOUND, Json(json!({ "error": what }))).into_response(),
            ApiError::Unprocessable(errors) => {
                (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response()
            }
            ApiError::Internal(message) => {
                tracing::error!("{message}");
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": message }))).into_response()
            }
        }
    }
}

fn field_error(field: &str, message: impl Into<String>) -> ApiError {
    ApiError::Unprocessable(vec![FieldError {
        field: field.into(),
        message: message.into(),
    }])
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::InvalidEntry { field, message } => field_error(field, message),
            LedgerError::UnknownRecord(_) => field_error("record_id", e.to_string()),
            LedgerError::LockInvalid(_) => field_error("record_id", e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// Parses a submitted draft. Any client timestamp is replaced by the
/// server's clock.
fn parse_draft(body: &[u8]) -> Result<EntryDraft, ApiError> {
    let mut value: Value = serde_json::from_slice(body).map_err(|e| field_error("body", e.to_string()))?;
    let Some(obj) = value.as_object_mut() else {
        return Err(field_error("body", "expected an object"));
    };
    obj.remove("entry_id");
    obj.insert("timestamp".into(), json!(Utc::now()));
    serde_json::from_value(value).map_err(|e| field_error("body", e.to_string()))
}

async fn queue(State(s): State<Arc<ApiState>>) -> Json<Vec<ReviewQueueItem>> {
    Json(s.queue.clone())
}

async fn record(State(s): State<Arc<ApiState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let scored = s.records.get(&id).ok_or_else(|| ApiError::NotFound(format!("record `{id}`")))?;
    let ledger = {
        let _read = s.ledger_lock.read().await;
        s.ledger.load()?
    };
    let corrected = apply_corrections(std::slice::from_ref(scored), &ledger)?.remove(0);
    let entries: Vec<&LedgerEntry> = ledger.iter().filter(|e| e.draft.record_id == id).collect();
    Ok(Json(json!({
        "record": corrected,
        "scored_evidence": scored.evidence,
        "native": scored.native,
        "findings": s.details.get(&id).map(|d| d.findings.clone()).unwrap_or_default(),
        "conflict_candidates": s.probes.get(&id).cloned().unwrap_or_default(),
        "checklists": s.checklists_for(scored),
        "ledger_entries": entries,
    })))
}

async fn artifact(
    State(s): State<Arc<ApiState>>,
    Path((bundle_id, role)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let not_found = || ApiError::NotFound(format!("artifact `{role}` in bundle `{bundle_id}`"));
    let id: ContentHash = bundle_id.parse().map_err(|_| not_found())?;
    let bundle = s.store.load(&id).map_err(|_| not_found())?;
    let (kind, bytes) = s.store.read_raw(&bundle, &role).ok_or_else(not_found)?;
    let mut resp = Bytes::from(bytes).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(kind.mime()));
    headers.insert(MEDIA_KIND_HEADER, HeaderValue::from_static(kind.as_str()));
    Ok(resp)
}

async fn summary(State(s): State<Arc<ApiState>>) -> Result<Json<Value>, ApiError> {
    let ledger = {
        let _read = s.ledger_lock.read().await;
        s.ledger.load()?
    };
    Ok(Json(json!(ledger_summary(&ledger, &s.scored()))))
}

async fn current_cells(s: &ApiState) -> Result<(Vec<LedgerEntry>, CellsReport), ApiError> {
    let ledger = {
        let _read = s.ledger_lock.read().await;
        s.ledger.load()?
    };
    let cells = cells_report(&apply_corrections(&s.scored(), &ledger)?);
    Ok((ledger, cells))
}

async fn cells(State(s): State<Arc<ApiState>>) -> Result<Json<CellsReport>, ApiError> {
    Ok(Json(current_cells(&s).await?.1))
}

/// Cells before and after a draft decision. Nothing is persisted.
async fn cells_preview(State(s): State<Arc<ApiState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let draft = parse_draft(&body)?;
    let (mut ledger, before) = current_cells(&s).await?;
    let ctx = AppendContext {
        records: &s.records,
        valid_checklists: Some(&s.valid_checklists),
    };
    let (entry, duplicate) = append_entry(&ledger, draft, ctx)?;
    if !duplicate {
        ledger.push(entry);
    }
    let after = cells_report(&apply_corrections(&s.scored(), &ledger)?);
    Ok(Json(json!({ "before": before, "after": after })))
}

async fn post_ledger(State(s): State<Arc<ApiState>>, body: Bytes) -> Result<Response, ApiError> {
    let draft = parse_draft(&body)?;
    let ctx = AppendContext {
        records: &s.records,
        valid_checklists: Some(&s.valid_checklists),
    };
    let receipt = {
        let _write = s.ledger_lock.write().await;
        s.ledger.append(draft, ctx)?
    };
    let status = if receipt.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(receipt)).into_response())
}

async fn require_token(State(s): State<Arc<ApiState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let expected = format!("Bearer {token}");
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .is_some_and(|v| v.as_bytes() == expected.as_bytes());
        if !ok {
            return (StatusCode::UNAUTHORIZED, Json(json!({ "error": "missing or wrong bearer token" }))).into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/records/{record_id}", get(record))
        .route("/api/artifacts/{bundle_id}/{role}", get(artifact))
        .route("/api/ledger", post(post_ledger))
        .route("/api/summary", get(summary))
        .route("/api/cells", get(cells))
        .route("/api/cells/preview", post(cells_preview))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: ApiState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
