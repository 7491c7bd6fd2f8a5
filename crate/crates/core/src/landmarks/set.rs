use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mesh::Vec3;
use crate::{Error, Result};

/// Named 3-D landmarks of one subject, in template order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub names: Vec<String>,
    pub coords: Vec<Vec3>,
    pub subject_id: String,
}

impl LandmarkSet {
    pub fn new(names: Vec<String>, coords: Vec<Vec3>, subject_id: impl Into<String>) -> Result<Self> {
        let s = Self {
            names,
            coords,
            subject_id: subject_id.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.coords.len() {
            return Err(Error::LandmarkFormat(format!(
                "{} names but {} coordinates",
                self.names.len(),
                self.coords.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &self.names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateLandmark(n.clone()));
            }
        }
        if let Some(i) = self.coords.iter().position(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(Error::LandmarkFormat(format!(
                "non-finite coordinate for {:?}",
                self.names[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<Vec3> {
        self.position(name).map(|i| self.coords[i])
    }

    /// Coordinates flattened landmark-major: x1, y1, z1, x2, ...
    pub fn flatten(&self) -> Vec<f64> {
        self.coords.iter().flatten().copied().collect()
    }

    pub fn map_coords(&self, f: impl Fn(Vec3) -> Vec3) -> LandmarkSet {
        LandmarkSet {
            names: self.names.clone(),
            coords: self.coords.iter().map(|&c| f(c)).collect(),
            subject_id: self.subject_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkFormat {
    Csv,
    Json,
}

impl LandmarkFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Error::LandmarkFormat(format!("no extension on {}", path.display())))?
            .parse()
    }
}

impl FromStr for LandmarkFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::LandmarkFormat(format!("unknown format {other:?} (csv or json)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    name: String,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    #[serde(default)]
    subject_id: String,
    landmarks: Vec<Row>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonIn {
    File(JsonFile),
    Bare(Vec<Row>),
}

const SUBJECT_PREFIX: &str = "# subject_id=";

fn from_rows(rows: Vec<Row>, subject_id: String) -> Result<LandmarkSet> {
    let (names, coords) = rows.into_iter().map(|r| (r.name, [r.x, r.y, r.z])).unzip();
    LandmarkSet::new(names, coords, subject_id)
}

fn rows(lm: &LandmarkSet) -> Vec<Row> {
    lm.names
        .iter()
        .zip(&lm.coords)
        .map(|(n, c)| Row {
            name: n.clone(),
            x: c[0],
            y: c[1],
            z: c[2],
        })
        .collect()
}

/// Parse a landmark file. CSV files carry the subject id in an optional
/// leading `# subject_id=` comment; JSON files may be a bare row list.
pub fn read_landmarks(bytes: &[u8], format: LandmarkFormat) -> Result<LandmarkSet> {
    match format {
        LandmarkFormat::Json => {
            let parsed: JsonIn =
                serde_json::from_slice(bytes).map_err(|e| Error::LandmarkFormat(e.to_string()))?;
            match parsed {
                JsonIn::File(f) => from_rows(f.landmarks, f.subject_id),
                JsonIn::Bare(rows) => from_rows(rows, String::new()),
            }
        }
        LandmarkFormat::Csv => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::LandmarkFormat(e.to_string()))?;
            let (subject_id, body) = match text.strip_prefix(SUBJECT_PREFIX) {
                Some(rest) => {
                    let (id, body) = rest.split_once('\n').unwrap_or((rest, ""));
                    (id.trim_end_matches('\r').to_string(), body)
                }
                None => (String::new(), text),
            };
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
            let header = rdr.headers()?.clone();
            if header.iter().collect::<Vec<_>>() != ["name", "x", "y", "z"] {
                return Err(Error::LandmarkFormat(format!(
                    "expected header name,x,y,z, got {}",
                    header.iter().collect::<Vec<_>>().join(",")
                )));
            }
            let rows = rdr
                .deserialize()
                .collect::<std::result::Result<Vec<Row>, _>>()
                .map_err(|e| Error::LandmarkFormat(e.to_string()))?;
            from_rows(rows, subject_id)
        }
    }
}

pub fn write_landmarks(lm: &LandmarkSet, format: LandmarkFormat) -> Result<Vec<u8>> {
    match format {
        LandmarkFormat::Json => {
            let f = JsonFile {
                subject_id: lm.subject_id.clone(),
                landmarks: rows(lm),
            };
            Ok(serde_json::to_vec_pretty(&f)?)
        }
        LandmarkFormat::Csv => {
            let mut out = Vec::new();
            if !lm.subject_id.is_empty() {
                out.extend_from_slice(format!("{SUBJECT_PREFIX}{}\n", lm.subject_id).as_bytes());
            }
            let mut w = csv::Writer::from_writer(&mut out);
            for r in rows(lm) {
                w.serialize(r)?;
            }
            w.flush()?;
            drop(w);
            Ok(out)
        }
    }
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    let bytes = std::fs::read(path)?;
    let mut lm = read_landmarks(&bytes, LandmarkFormat::from_path(path)?)?;
    if lm.subject_id.is_empty() {
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            lm.subject_id = stem.to_string();
        }
    }
    Ok(lm)
}
