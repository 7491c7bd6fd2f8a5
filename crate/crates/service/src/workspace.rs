//! Subject registry persisted as JSON under the workspace root, with an
//! append-only parameter journal.
//!
//! Layout:
//!
//! ```text
//! <root>/inputs/*.nii[.gz]   subject volumes; the id is the file stem
//! <root>/mrface.toml         optional base pipeline configuration
//! <root>/workspace.json      registry: status, parameters, last run
//! <root>/journal.ndjson      one line per parameter change
//! <root>/subjects/<id>/      pipeline outputs
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use mrface_core::mesh::{CropSpec, TriMesh};
use mrface_core::volume::Volume;
use mrface_pipeline::extract::{subject_id, PreparedVolume};
use mrface_pipeline::{list_inputs, PipelineConfig, PipelineError, Resources};
use serde::{Deserialize, Serialize};

pub const INPUTS_DIR: &str = "inputs";
pub const CONFIG_FILE: &str = "mrface.toml";
pub const REGISTRY_FILE: &str = "workspace.json";
pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const SUBJECTS_DIR: &str = "subjects";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Flagged,
}

/// Per-subject overrides of the base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub threshold: Option<f64>,
    pub crop: Option<CropSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastRun {
    pub threshold: f64,
    pub threshold_valid: bool,
    pub residual: f64,
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub input: String,
    pub status: ReviewStatus,
    pub params: SubjectParams,
    pub last_run: Option<LastRun>,
    pub error: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Registry {
    subjects: Vec<SubjectRecord>,
}

/// Computation results kept in memory between requests.
#[derive(Default)]
pub struct SubjectCache {
    pub prepared: Option<Arc<PreparedVolume>>,
    pub preview_volume: Option<Arc<Volume>>,
    pub head: Option<Arc<TriMesh>>,
}

pub struct Workspace {
    pub root: PathBuf,
    pub base: PipelineConfig,
    pub resources: Arc<Resources>,
    records: RwLock<BTreeMap<String, SubjectRecord>>,
    slots: BTreeMap<String, Arc<tokio::sync::Mutex<SubjectCache>>>,
    /// Serializes journal appends and registry writes.
    persist: Mutex<u64>,
}

fn ws_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(format!("workspace: {e}"))
}

impl Workspace {
    /// Load the registry and register any new inputs as pending.
    pub fn open(root: &Path) -> mrface_pipeline::Result<Self> {
        let root = root.to_path_buf();
        let mut base = match root.join(CONFIG_FILE) {
            p if p.is_file() => PipelineConfig::load(&p)?,
            _ => PipelineConfig::default(),
        };
        base.output_dir = root.join(SUBJECTS_DIR);
        let resources = Arc::new(Resources::load(&base)?);

        let mut records: BTreeMap<String, SubjectRecord> = match std::fs::read(root.join(REGISTRY_FILE)) {
            Ok(bytes) => serde_json::from_slice::<Registry>(&bytes)
                .map_err(ws_err)?
                .subjects
                .into_iter()
                .map(|r| (r.id.clone(), r))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(ws_err(e)),
        };
        let inputs = root.join(INPUTS_DIR);
        if inputs.is_dir() {
            // an empty inputs folder is a valid (empty) workspace
            for p in list_inputs(&inputs).unwrap_or_default() {
                let id = subject_id(&p);
                records.entry(id.clone()).or_insert_with(|| SubjectRecord {
                    id,
                    input: p.file_name().unwrap().to_string_lossy().into_owned(),
                    status: ReviewStatus::Pending,
                    params: SubjectParams::default(),
                    last_run: None,
                    error: None,
                });
            }
        }
        let journal_len = std::fs::read_to_string(root.join(JOURNAL_FILE))
            .map(|s| s.lines().filter(|l| !l.trim().is_empty()).count() as u64)
            .unwrap_or(0);
        let slots = records.keys().map(|id| (id.clone(), Arc::default())).collect();
        let ws = Self {
            root,
            base,
            resources,
            records: RwLock::new(records),
            slots,
            persist: Mutex::new(journal_len),
        };
        ws.save_registry()?;
        Ok(ws)
    }

    pub fn records(&self) -> Vec<SubjectRecord> {
        self.records.read().unwrap().values().cloned().collect()
    }

    pub fn record(&self, id: &str) -> Option<SubjectRecord> {
        self.records.read().unwrap().get(id).cloned()
    }

    /// The per-subject lock; holders may mutate the cache and the record.
    pub fn slot(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<SubjectCache>>> {
        self.slots.get(id).cloned()
    }

    pub fn input_path(&self, r: &SubjectRecord) -> PathBuf {
        self.root.join(INPUTS_DIR).join(&r.input)
    }

    pub fn output_dir(&self, id: &str) -> PathBuf {
        self.base.output_dir.join(id)
    }

    /// Base configuration with the subject's overrides.
    pub fn subject_config(&self, r: &SubjectRecord) -> PipelineConfig {
        let mut cfg = self.base.clone();
        if let Some(t) = r.params.threshold {
            cfg.threshold = Some(t);
            cfg.calibration = None;
        }
        if let Some(c) = r.params.crop {
            cfg.crop = Some(c);
        }
        cfg
    }

    /// Replace a record and persist the registry.
    pub fn update(&self, r: SubjectRecord) -> mrface_pipeline::Result<()> {
        let _g = self.persist.lock().unwrap();
        self.records.write().unwrap().insert(r.id.clone(), r);
        self.write_registry()
    }

    /// Append a journal line, then replace the record. Returns the entry's
    /// sequence number.
    pub fn journaled_update(&self, r: SubjectRecord, change: &serde_json::Value) -> mrface_pipeline::Result<u64> {
        let mut seq = self.persist.lock().unwrap();
        let line = serde_json::json!({
            "seq": *seq + 1,
            "subject": r.id,
            "change": change,
            "status": r.status,
            "params": r.params,
        });
        let path = self.root.join(JOURNAL_FILE);
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(ws_err)?;
        writeln!(f, "{line}").map_err(ws_err)?;
        *seq += 1;
        self.records.write().unwrap().insert(r.id.clone(), r);
        self.write_registry()?;
        Ok(*seq)
    }

    pub fn journal_len(&self) -> u64 {
        *self.persist.lock().unwrap()
    }

    fn save_registry(&self) -> mrface_pipeline::Result<()> {
        let _g = self.persist.lock().unwrap();
        self.write_registry()
    }

    fn write_registry(&self) -> mrface_pipeline::Result<()> {
        let reg = Registry {
            subjects: self.records(),
        };
        std::fs::create_dir_all(&self.root).map_err(ws_err)?;
        let tmp = self.root.join(format!("{REGISTRY_FILE}.tmp"));
        let bytes = serde_json::to_vec_pretty(&reg).map_err(ws_err)?;
        std::fs::write(&tmp, bytes).map_err(ws_err)?;
        std::fs::rename(&tmp, self.root.join(REGISTRY_FILE)).map_err(ws_err)
    }
}
