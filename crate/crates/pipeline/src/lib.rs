//! Per-subject pipeline from a head MRI to a face mesh with landmarks,
//! batch runs, snapshots and two-group comparison.

pub mod batch;
pub mod compare;
pub mod config;
pub mod error;
pub mod extract;
mod plots;
pub mod provenance;
pub mod snapshot;

pub use batch::{list_inputs, run_batch, BatchStatus, BatchSummary, SubjectStatus, SummaryRow};
pub use compare::{compare_groups, edma_analysis, gpa_analysis, CompareOutput, CompareParams, EdmaAnalysis, GpaAnalysis};
pub use config::{ConfigOverrides, PipelineConfig, Seeds};
pub use error::{PipelineError, Result, Stage};
pub use extract::{run_subject, run_subject_with, Resources, SubjectOutput, SubjectReport};
pub use snapshot::{render_snapshot, save_snapshot};
