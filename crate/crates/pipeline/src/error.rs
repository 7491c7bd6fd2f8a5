use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

/// Stages of per-subject processing, named in reports and errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Enhance,
    Threshold,
    Isosurface,
    Clean,
    Align,
    Occlusion,
    Crop,
    Smooth,
    Landmarks,
    Snapshot,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: mrface_core::Error,
    },
    #[error(
        "predicted threshold {threshold:.3} is outside (mean {mean:.3}, max {max:.3}); \
         set a threshold manually (--threshold, or PATCH the subject's params) and rerun"
    )]
    InvalidThreshold { threshold: f64, mean: f64, max: f64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::Stage { stage, .. } => Some(*stage),
            Self::InvalidThreshold { .. } => Some(Stage::Threshold),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Attach a stage name to core errors.
pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T> AtStage<T> for mrface_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|source| PipelineError::Stage { stage, source })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}
