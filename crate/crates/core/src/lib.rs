//! Core library: MRI volume handling, skin isosurface extraction, head and
//! face mesh processing, template landmark transfer, and landmark-based shape
//! morphometrics (Procrustes/PCA and distance-matrix analysis).

mod error;

pub mod enhance;
pub mod landmarks;
pub mod mesh;
pub mod morphometrics;
pub mod phantom;
pub mod reconstruct;
pub mod volume;

pub use error::{Error, Result};

/// A value together with non-fatal diagnostics produced while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Outcome<T> {
    pub fn ok(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
        }
    }

    pub fn with_warnings(value: T, warnings: Vec<String>) -> Self {
        for w in &warnings {
            log::warn!("{w}");
        }
        Self { value, warnings }
    }

    pub fn warn(value: T, warning: impl Into<String>) -> Self {
        Self::with_warnings(value, vec![warning.into()])
    }

    pub fn into_value(self) -> T {
        self.value
    }
}
