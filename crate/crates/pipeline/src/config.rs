use std::path::{Path, PathBuf};

use mrface_core::mesh::{CropSpec, DEFAULT_RAYS};
use mrface_core::landmarks::REVIEW_GATE_MM;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Seeds of the randomized stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub occlusion: u64,
    pub alignment: u64,
    pub landmarks: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            occlusion: 1,
            alignment: 2,
            landmarks: 3,
        }
    }
}

/// Per-subject processing configuration.
///
/// Exactly one of `calibration` and `threshold` must be set. A `crop` of
/// `None` means the default band anchored on the reference nose tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub calibration: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub crop: Option<CropSpec>,
    pub fine_alignment: bool,
    /// Apply only the rotation and translation of the control-point fit.
    pub rigid_only: bool,
    pub smooth_remesh: bool,
    pub save_snapshot: bool,
    /// Compute the threshold statistics on the raw rather than the enhanced volume.
    pub raw_stats: bool,
    pub occlusion_rays: usize,
    pub review_gate: f64,
    pub seeds: Seeds,
    /// Template directory; the bundled template when unset.
    pub template: Option<PathBuf>,
    /// Reference histogram JSON; the bundled one when unset.
    pub reference_histogram: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            calibration: None,
            threshold: None,
            crop: None,
            fine_alignment: true,
            rigid_only: true,
            smooth_remesh: false,
            save_snapshot: false,
            raw_stats: false,
            occlusion_rays: DEFAULT_RAYS,
            review_gate: REVIEW_GATE_MM,
            seeds: Seeds::default(),
            template: None,
            reference_histogram: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line; each one that is set wins over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub calibration: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub crop: Option<CropSpec>,
    pub no_fine_alignment: bool,
    pub similarity: bool,
    pub smooth_remesh: bool,
    pub save_snapshot: bool,
    pub raw_stats: bool,
    pub template: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parse TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [&mut cfg.calibration, &mut cfg.template, &mut cfg.reference_histogram].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Command-line values over file values. A threshold given on the
    /// command line replaces a calibration from the file and vice versa.
    pub fn apply(mut self, o: &ConfigOverrides) -> Self {
        if let Some(c) = &o.calibration {
            self.calibration = Some(c.clone());
            self.threshold = None;
        }
        if let Some(t) = o.threshold {
            self.threshold = Some(t);
            self.calibration = None;
        }
        if let Some(c) = o.crop {
            self.crop = Some(c);
        }
        if o.no_fine_alignment {
            self.fine_alignment = false;
        }
        if o.similarity {
            self.rigid_only = false;
        }
        self.smooth_remesh |= o.smooth_remesh;
        self.save_snapshot |= o.save_snapshot;
        self.raw_stats |= o.raw_stats;
        if let Some(t) = &o.template {
            self.template = Some(t.clone());
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self
    }

    /// Configuration checks that must pass before any processing.
    pub fn validate(&self) -> Result<()> {
        match (&self.calibration, self.threshold) {
            (None, None) => {
                return Err(PipelineError::Config(
                    "no threshold source: pass --threshold T or --calibration model.json".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(PipelineError::Config("give either a calibration or a threshold, not both".into()))
            }
            (None, Some(t)) if !t.is_finite() => {
                return Err(PipelineError::Config(format!("threshold must be finite, got {t}")))
            }
            _ => {}
        }
        for (what, p) in [
            ("calibration", &self.calibration),
            ("template", &self.template),
            ("reference histogram", &self.reference_histogram),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(PipelineError::Config(format!("{what} path {} does not exist", p.display())));
                }
            }
        }
        if let Some(c) = &self.crop {
            c.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.occlusion_rays == 0 {
            return Err(PipelineError::Config("occlusion_rays must be positive".into()));
        }
        if !(self.review_gate > 0.0) {
            return Err(PipelineError::Config("review_gate must be positive".into()));
        }
        Ok(())
    }
}
