use std::path::PathBuf;

use crate::landmarks::{landmark_code, load_landmarks, LandmarkSet};
use crate::mesh::Vec3;
use crate::{Error, Result};

/// One study group: a row of flattened landmark coordinates per subject
/// (landmark-major x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub group_id: String,
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
}

impl GroupSample {
    pub fn from_sets(group_id: impl Into<String>, sets: &[LandmarkSet]) -> Result<Self> {
        let group_id = group_id.into();
        let first = sets
            .first()
            .ok_or_else(|| Error::Group(format!("group {group_id:?} is empty")))?;
        for s in sets {
            check_names(&first.names, &s.names, &s.subject_id)?;
        }
        Ok(Self {
            group_id,
            ids: sets.iter().map(|s| s.subject_id.clone()).collect(),
            names: first.names.clone(),
            x: sets.iter().map(LandmarkSet::flatten).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn landmark_count(&self) -> usize {
        self.names.len()
    }

    /// Configuration of subject `i` as l points.
    pub fn config(&self, i: usize) -> Vec<Vec3> {
        self.x[i].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    pub fn configs(&self) -> Vec<Vec<Vec3>> {
        (0..self.len()).map(|i| self.config(i)).collect()
    }

    /// Spreadsheet with header `id,L01_x,L01_y,L01_z,...`; known names are
    /// written by their positional code.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["id".to_string()];
        for n in &self.names {
            let code = landmark_code(n).unwrap_or(n);
            header.extend(["x", "y", "z"].map(|a| format!("{code}_{a}")));
        }
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(&self.x) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        drop(w);
        Ok(out)
    }

    pub fn from_csv(group_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let group_id = group_id.into();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("id") || (header.len() - 1) % 3 != 0 || header.len() < 4 {
            return Err(Error::Group("spreadsheet header must be id followed by x,y,z triples".into()));
        }
        let mut names = Vec::new();
        for t in header[1..].chunks_exact(3) {
            let stem = t[0]
                .strip_suffix("_x")
                .filter(|s| t[1] == format!("{s}_y") && t[2] == format!("{s}_z"))
                .ok_or_else(|| Error::Group(format!("bad column triple {t:?}")))?;
            names.push(stem.to_string());
        }
        let (mut ids, mut x) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Group(format!("row has {} fields, header has {}", rec.len(), header.len())));
            }
            ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|f| f.is_finite())
                        .ok_or_else(|| Error::Group(format!("non-numeric value {v:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            x.push(row);
        }
        if x.is_empty() {
            return Err(Error::Group(format!("group {group_id:?} is empty")));
        }
        Ok(Self { group_id, ids, names, x })
    }
}

fn check_names(expected: &[String], got: &[String], subject: &str) -> Result<()> {
    if got.len() != expected.len() {
        return Err(Error::Group(format!(
            "subject {subject:?} has {} landmarks, expected {}",
            got.len(),
            expected.len()
        )));
    }
    if got != expected {
        return Err(Error::Group(format!("subject {subject:?} has a different landmark name order")));
    }
    Ok(())
}

/// Load every landmark file of every group; all subjects of all groups must
/// share one landmark name order.
pub fn prepare_groups(files: &[(String, Vec<PathBuf>)]) -> Result<Vec<GroupSample>> {
    let mut groups = Vec::new();
    for (gid, paths) in files {
        let sets = paths.iter().map(|p| load_landmarks(p)).collect::<Result<Vec<_>>>()?;
        groups.push(GroupSample::from_sets(gid.clone(), &sets)?);
    }
    if let Some(first) = groups.first() {
        for g in &groups[1..] {
            check_names(&first.names, &g.names, &format!("group {}", g.group_id))?;
        }
    }
    Ok(groups)
}
