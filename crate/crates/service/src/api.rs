//! HTTP handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use mrface_core::landmarks::{load_landmarks, write_landmarks, LandmarkFormat, LandmarkSet};
use mrface_core::mesh::{crop_face, write_ply, CropSpec, PlyFormat, TriMesh};
use mrface_core::morphometrics::GroupSample;
use mrface_core::reconstruct::extract_isosurface;
use mrface_pipeline::compare::{edma_analysis, gpa_analysis, CompareParams, GROUP_A, GROUP_B};
use mrface_pipeline::extract::{
    decide_threshold, predicted_threshold, prepare_volume, run_prepared, PreparedVolume, LANDMARKS_FILE, REPORT_FILE,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::OwnedMutexGuard;

use crate::error::{ApiError, ApiResult};
use crate::workspace::{LastRun, ReviewStatus, SubjectCache, SubjectParams, SubjectRecord, Workspace};

pub const MESH_FORMAT_HEADER: &str = "x-mesh-format";
pub const MESH_FORMAT: &str = "ply-binary-le";
pub const THRESHOLD_USED_HEADER: &str = "x-threshold-used";
pub const THRESHOLD_VALID_HEADER: &str = "x-threshold-valid";
pub const VERTEX_COUNT_HEADER: &str = "x-vertex-count";

type Ws = State<Arc<Workspace>>;

pub fn router(ws: Arc<Workspace>) -> Router {
    Router::new()
        .route("/subjects", get(list_subjects))
        .route("/subjects/{id}/preview", post(preview))
        .route("/subjects/{id}/crop-preview", post(crop_preview))
        .route("/subjects/{id}/params", patch(patch_params))
        .route("/subjects/{id}/run", post(run))
        .route("/subjects/{id}/landmarks", get(landmarks))
        .route("/analysis/gpa", post(analysis_gpa))
        .route("/analysis/edma", post(analysis_edma))
        .with_state(ws)
}

/// JSON body parsing with 422 on malformed input; an empty body reads as `{}`.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn lock_subject(ws: &Workspace, id: &str) -> ApiResult<(SubjectRecord, OwnedMutexGuard<SubjectCache>)> {
    let slot = ws.slot(id).ok_or_else(|| ApiError::not_found(id))?;
    let guard = slot.lock_owned().await;
    let record = ws.record(id).ok_or_else(|| ApiError::not_found(id))?;
    Ok((record, guard))
}

fn ensure_prepared(ws: &Workspace, r: &SubjectRecord, cache: &mut SubjectCache) -> ApiResult<Arc<PreparedVolume>> {
    if let Some(p) = &cache.prepared {
        return Ok(p.clone());
    }
    let p = Arc::new(prepare_volume(&ws.input_path(r), &ws.resources)?);
    cache.preview_volume = Some(Arc::new(p.enhanced.downsample2()));
    cache.prepared = Some(p.clone());
    Ok(p)
}

fn mesh_response(mesh: &TriMesh, extra: &[(&'static str, String)]) -> Response {
    let mut res = write_ply(mesh, PlyFormat::BinaryLittleEndian).into_response();
    let h = res.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    h.insert(MESH_FORMAT_HEADER, HeaderValue::from_static(MESH_FORMAT));
    h.insert(VERTEX_COUNT_HEADER, HeaderValue::from(mesh.vertices.len()));
    for (k, v) in extra {
        h.insert(*k, HeaderValue::from_str(v).expect("ascii header value"));
    }
    res
}

#[derive(Debug, Serialize)]
pub struct SubjectEntry {
    pub id: String,
    pub status: ReviewStatus,
    /// Explicit threshold if set, otherwise the one used by the last run.
    pub threshold: Option<f64>,
    pub params: SubjectParams,
    pub processed: bool,
    pub error: Option<String>,
}

impl From<SubjectRecord> for SubjectEntry {
    fn from(r: SubjectRecord) -> Self {
        Self {
            threshold: r.params.threshold.or(r.last_run.as_ref().map(|l| l.threshold)),
            processed: r.last_run.is_some(),
            id: r.id,
            status: r.status,
            params: r.params,
            error: r.error,
        }
    }
}

async fn list_subjects(State(ws): Ws) -> Json<Vec<SubjectEntry>> {
    Json(ws.records().into_iter().map(SubjectEntry::from).collect())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewRequest {
    threshold: Option<f64>,
}

/// Isosurface of the 2x downsampled enhanced volume. Without a threshold the
/// calibrated prediction is used, then the subject's explicit threshold.
async fn preview(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: PreviewRequest = parse_body(&body)?;
    if let Some(t) = req.threshold {
        if !t.is_finite() {
            return Err(ApiError::unprocessable(format!("threshold must be finite, got {t}")));
        }
    }
    let (record, mut cache) = lock_subject(&ws, &id).await?;
    let ws2 = ws.clone();
    blocking(move || {
        let prep = ensure_prepared(&ws2, &record, &mut cache)?;
        let explicit = |t: f64| {
            let mut cfg = ws2.base.clone();
            cfg.threshold = Some(t);
            cfg.calibration = None;
            decide_threshold(&prep, &cfg, &ws2.resources)
        };
        let decision = match (req.threshold, record.params.threshold) {
            (Some(t), _) => explicit(t)?,
            (None, fallback) => match (predicted_threshold(&prep, &ws2.resources, ws2.base.raw_stats)?, fallback) {
                (Some(d), _) => d,
                (None, Some(t)) => explicit(t)?,
                (None, None) => {
                    return Err(ApiError::unprocessable("no threshold given and no calibration configured"))
                }
            },
        };
        let vol = cache.preview_volume.clone().expect("prepared above");
        let mesh = extract_isosurface(&vol, decision.threshold).value;
        Ok(mesh_response(
            &mesh,
            &[
                (THRESHOLD_USED_HEADER, decision.threshold.to_string()),
                (THRESHOLD_VALID_HEADER, decision.valid.to_string()),
            ],
        ))
    })
    .await
}

async fn crop_preview(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let (_, cache) = lock_subject(&ws, &id).await?;
    let crop: CropSpec = parse_body(&body)?;
    crop.validate()?;
    let head = cache
        .head
        .clone()
        .ok_or_else(|| ApiError::conflict(format!("subject {id:?} has no head mesh yet; POST /subjects/{id}/run first")))?;
    drop(cache);
    blocking(move || Ok(mesh_response(&crop_face(&head, &crop)?, &[]))).await
}

/// Applies a partial update. A key set to `null` clears that parameter.
async fn patch_params(State(ws): Ws, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SubjectEntry>> {
    let change: serde_json::Map<String, serde_json::Value> = parse_body(&body)?;
    let (mut record, mut cache) = lock_subject(&ws, &id).await?;
    for (key, value) in &change {
        match key.as_str() {
            "threshold" => {
                let t: Option<f64> = serde_json::from_value(value.clone())
                    .map_err(|e| ApiError::unprocessable(format!("threshold: {e}")))?;
                if let Some(t) = t {
                    if !t.is_finite() {
                        return Err(ApiError::unprocessable("threshold must be finite"));
                    }
                }
                if t != record.params.threshold {
                    cache.head = None;
                }
                record.params.threshold = t;
            }
            "crop" => {
                let c: Option<CropSpec> =
                    serde_json::from_value(value.clone()).map_err(|e| ApiError::unprocessable(format!("crop: {e}")))?;
                if let Some(c) = &c {
                    c.validate()?;
                }
                record.params.crop = c;
            }
            "status" => {
                record.status = serde_json::from_value(value.clone())
                    .map_err(|e| ApiError::unprocessable(format!("status: {e}")))?;
            }
            other => return Err(ApiError::unprocessable(format!("unknown parameter {other:?}"))),
        }
    }
    ws.journaled_update(record.clone(), &serde_json::Value::Object(change))?;
    Ok(Json(record.into()))
}

/// Full pipeline for one subject with its current parameters.
async fn run(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Response> {
    let (mut record, mut cache) = lock_subject(&ws, &id).await?;
    let ws2 = ws.clone();
    blocking(move || {
        let cfg = ws2.subject_config(&record);
        let result = cfg
            .validate()
            .map_err(ApiError::from)
            .and_then(|_| ensure_prepared(&ws2, &record, &mut cache))
            .and_then(|prep| Ok(run_prepared(&prep, &cfg, &ws2.resources)?));
        match result {
            Ok(out) => {
                let r = &out.report;
                record.last_run = Some(LastRun {
                    threshold: r.threshold.threshold,
                    threshold_valid: r.threshold.valid,
                    residual: r.landmarks.icp_residual,
                    needs_review: r.landmarks.needs_review,
                });
                record.error = None;
                if r.landmarks.needs_review && record.status == ReviewStatus::Pending {
                    record.status = ReviewStatus::Flagged;
                }
                cache.head = Some(Arc::new(out.head));
                ws2.update(record)?;
                Ok(Json(out.report).into_response())
            }
            Err(e) => {
                record.error = Some(e.message.clone());
                ws2.update(record)?;
                Err(e)
            }
        }
    })
    .await
}

fn read_landmarks_of(ws: &Workspace, id: &str) -> ApiResult<LandmarkSet> {
    let path = ws.output_dir(id).join(LANDMARKS_FILE);
    if !path.is_file() {
        return Err(ApiError::conflict(format!("subject {id:?} has no landmarks yet")));
    }
    Ok(load_landmarks(&path)?)
}

async fn landmarks(State(ws): Ws, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    if ws.record(&id).is_none() {
        return Err(ApiError::not_found(&id));
    }
    let lm = read_landmarks_of(&ws, &id)?;
    let mut out: serde_json::Value = serde_json::from_slice(&write_landmarks(&lm, LandmarkFormat::Json)?)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let report: serde_json::Value = std::fs::read(ws.output_dir(&id).join(REPORT_FILE))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    out["residual"] = report["landmarks"]["icp_residual"].clone();
    out["needs_review"] = report["landmarks"]["needs_review"].clone();
    Ok(Json(out))
}

/// Landmark groups for an analysis; every subject must be accepted.
fn load_group(ws: &Workspace, group: &str, ids: &[String]) -> ApiResult<GroupSample> {
    let mut sets = Vec::with_capacity(ids.len());
    for id in ids {
        let r = ws
            .record(id)
            .ok_or_else(|| ApiError::unprocessable(format!("unknown subject {id:?} in {group}")))?;
        if r.status != ReviewStatus::Accepted {
            return Err(ApiError::conflict(format!("subject {id:?} is not accepted")));
        }
        sets.push(read_landmarks_of(ws, id)?);
    }
    GroupSample::from_sets(group, &sets).map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpaRequest {
    group_a: Vec<String>,
    group_b: Vec<String>,
    components: Option<usize>,
}

async fn analysis_gpa(State(ws): Ws, body: Bytes) -> ApiResult<Response> {
    let req: GpaRequest = parse_body(&body)?;
    blocking(move || {
        let a = load_group(&ws, GROUP_A, &req.group_a)?;
        let b = load_group(&ws, GROUP_B, &req.group_b)?;
        let components = req.components.unwrap_or(CompareParams::default().components);
        Ok(Json(gpa_analysis(&a, &b, components)?).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdmaRequest {
    group_a: Vec<String>,
    group_b: Vec<String>,
    alpha: Option<f64>,
    bootstrap: Option<usize>,
    seed: Option<u64>,
    k: Option<usize>,
}

async fn analysis_edma(State(ws): Ws, body: Bytes) -> ApiResult<Response> {
    let req: EdmaRequest = parse_body(&body)?;
    blocking(move || {
        let a = load_group(&ws, GROUP_A, &req.group_a)?;
        let b = load_group(&ws, GROUP_B, &req.group_b)?;
        let d = CompareParams::default();
        let params = CompareParams {
            alpha: req.alpha.unwrap_or(d.alpha),
            bootstrap: req.bootstrap.unwrap_or(d.bootstrap),
            seed: req.seed.unwrap_or(d.seed),
            k: req.k,
            ..d
        };
        Ok(Json(edma_analysis(&a, &b, &params)?).into_response())
    })
    .await
}
