//! Provenance records written next to every output.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the configuration with the output directory blanked, so the
/// same settings written to two places share one digest. Referenced files
/// (calibration, template, histogram) are hashed by content, not path.
pub fn config_digest(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = Default::default();
    let mut files = BTreeMap::new();
    for (key, p) in [
        ("calibration", c.calibration.take()),
        ("template", c.template.take()),
        ("reference_histogram", c.reference_histogram.take()),
    ] {
        if let Some(p) = p {
            files.insert(key, path_digest(&p));
        }
    }
    let text = serde_json::to_string(&(&c, &files)).expect("config serializes");
    sha256_hex(text.as_bytes())
}

/// Content digest of a file, or of every file of a directory in name order.
fn path_digest(p: &std::path::Path) -> String {
    if p.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(p)
            .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).collect())
            .unwrap_or_default();
        names.sort();
        let mut h = Sha256::new();
        for n in names {
            h.update(n.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
            h.update(path_digest(&n));
        }
        hex::encode(h.finalize())
    } else {
        std::fs::read(p).map(|b| sha256_hex(&b)).unwrap_or_else(|_| "unreadable".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub input_sha256: BTreeMap<String, String>,
    pub config_sha256: Option<String>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(input_sha256: &str, cfg: &PipelineConfig) -> Self {
        let mut p = Self::bare();
        p.input_sha256.insert("volume".into(), input_sha256.into());
        p.config_sha256 = Some(config_digest(cfg));
        p
    }

    /// Record without a pipeline configuration (analysis outputs).
    pub fn bare() -> Self {
        Self {
            tool: "mrface".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            input_sha256: BTreeMap::new(),
            config_sha256: None,
            parameters: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.input_sha256.insert(name.into(), sha256_hex(bytes));
    }

    pub fn param<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) {
        self.parameters
            .insert(name.into(), serde_json::to_value(value).expect("parameter serializes"));
    }

    pub fn output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.into(), sha256_hex(bytes));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_output_dir() {
        let a = PipelineConfig {
            threshold: Some(80.0),
            output_dir: "/a".into(),
            ..Default::default()
        };
        let b = PipelineConfig {
            output_dir: "/b".into(),
            ..a.clone()
        };
        assert_eq!(config_digest(&a), config_digest(&b));
        let c = PipelineConfig {
            threshold: Some(81.0),
            ..a.clone()
        };
        assert_ne!(config_digest(&a), config_digest(&c));
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
