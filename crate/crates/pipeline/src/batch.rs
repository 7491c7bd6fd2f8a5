//! Folder-level runs with per-subject failure isolation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{io_err, PipelineError, Result};
use crate::extract::{pretty_json, run_subject_with, subject_id, Resources};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectStatus {
    Ok,
    NeedsReview,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub subject: String,
    pub status: SubjectStatus,
    pub threshold: Option<f64>,
    pub threshold_valid: Option<bool>,
    pub residual: Option<f64>,
    pub stage: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStatus {
    Success,
    Partial,
    AllFailed,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub rows: Vec<SummaryRow>,
}

impl BatchSummary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == SubjectStatus::Failed).count()
    }

    pub fn status(&self) -> BatchStatus {
        match self.failures() {
            0 => BatchStatus::Success,
            n if n == self.rows.len() => BatchStatus::AllFailed,
            _ => BatchStatus::Partial,
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subject", "status", "threshold", "threshold_valid", "residual", "stage", "error"])
            .expect("in-memory csv");
        for r in &self.rows {
            let status = serde_json::to_value(r.status).expect("status serializes");
            w.write_record([
                r.subject.clone(),
                status.as_str().unwrap_or_default().to_string(),
                r.threshold.map(|t| t.to_string()).unwrap_or_default(),
                r.threshold_valid.map(|t| t.to_string()).unwrap_or_default(),
                r.residual.map(|t| t.to_string()).unwrap_or_default(),
                r.stage.clone().unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

fn is_nifti(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    p.is_file() && (name.ends_with(".nii") || name.ends_with(".nii.gz"))
}

/// NIfTI files directly inside `folder`, sorted by name.
pub fn list_inputs(folder: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(folder).map_err(io_err(folder))?;
    let mut files: Vec<PathBuf> = rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| is_nifti(p)).collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::Input(format!("no .nii or .nii.gz files in {}", folder.display())));
    }
    Ok(files)
}

/// Process every NIfTI of a folder (concurrently) and write the summary
/// table into the output directory. Only configuration problems and an
/// empty folder are errors; subject failures land in the summary.
pub fn run_batch(folder: &Path, cfg: &PipelineConfig) -> Result<BatchSummary> {
    cfg.validate()?;
    let inputs = list_inputs(folder)?;
    let res = Resources::load(cfg)?;
    let mut ids: Vec<String> = inputs.iter().map(|p| subject_id(p)).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(PipelineError::Input(format!("two inputs map to subject id {:?}", w[0])));
    }
    let mut rows: Vec<SummaryRow> = inputs
        .par_iter()
        .map(|p| match run_subject_with(p, cfg, &res) {
            Ok(out) => {
                let r = &out.report;
                SummaryRow {
                    subject: r.subject_id.clone(),
                    status: if r.landmarks.needs_review {
                        SubjectStatus::NeedsReview
                    } else {
                        SubjectStatus::Ok
                    },
                    threshold: Some(r.threshold.threshold),
                    threshold_valid: Some(r.threshold.valid),
                    residual: Some(r.landmarks.icp_residual),
                    stage: None,
                    error: None,
                }
            }
            Err(e) => {
                log::error!("{}: {e}", p.display());
                SummaryRow {
                    subject: subject_id(p),
                    status: SubjectStatus::Failed,
                    threshold: None,
                    threshold_valid: None,
                    residual: None,
                    stage: e.stage().map(|s| s.to_string()),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    rows.sort_by(|a, b| a.subject.cmp(&b.subject));
    let summary = BatchSummary { rows };
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let csv_path = cfg.output_dir.join(SUMMARY_CSV);
    std::fs::write(&csv_path, summary.to_csv()).map_err(io_err(&csv_path))?;
    let json_path = cfg.output_dir.join(SUMMARY_JSON);
    std::fs::write(&json_path, pretty_json(&summary)).map_err(io_err(&json_path))?;
    Ok(summary)
}
