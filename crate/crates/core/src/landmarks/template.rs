use std::path::Path;

use super::set::{read_landmarks, write_landmarks, LandmarkFormat, LandmarkSet};
use crate::mesh::{read_ply, write_ply, Bvh, PlyFormat, TriMesh, Vec3};
use crate::{Error, Result};

/// Positional codes of the default 20-point model and the conventional
/// facial names used in files. Right/left are the subject's.
pub const LANDMARK_NAMES: [(&str, &str); 20] = [
    ("L01", "glabella"),
    ("L02", "nasion"),
    ("L03", "eye_inner_right"),
    ("L04", "eye_inner_left"),
    ("L05", "eye_outer_right"),
    ("L06", "eye_outer_left"),
    ("L07", "nose_tip"),
    ("L08", "subnasale"),
    ("L09", "alar_right"),
    ("L10", "alar_left"),
    ("L11", "mouth_corner_right"),
    ("L12", "mouth_corner_left"),
    ("L13", "upper_lip"),
    ("L14", "lower_lip"),
    ("L15", "stomion"),
    ("L16", "sublabiale"),
    ("L17", "pogonion"),
    ("L18", "gnathion"),
    ("L19", "cheek_right"),
    ("L20", "cheek_left"),
];

pub const CONTROL_NAMES: [&str; 5] = [
    "eye_inner_right",
    "eye_inner_left",
    "nose_tip",
    "mouth_corner_right",
    "mouth_corner_left",
];

/// Code (`L07`) for a conventional name, or the name itself if it already is one.
pub fn landmark_code(name: &str) -> Option<&'static str> {
    LANDMARK_NAMES
        .iter()
        .find(|(c, a)| *c == name || *a == name)
        .map(|(c, _)| *c)
}

/// Distance from each point to the nearest triangle of `mesh`.
pub fn surface_distances(mesh: &TriMesh, pts: &[Vec3]) -> Vec<f64> {
    let bvh = Bvh::new(mesh);
    pts.iter()
        .map(|&p| bvh.closest_point(p).map_or(f64::INFINITY, |(_, d2, _)| d2.sqrt()))
        .collect()
}

/// Reference face with its landmarks. `head` is the uncropped reference
/// head the face was cut from, used to place control points before cropping.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTemplate {
    pub mesh: TriMesh,
    pub head: Option<TriMesh>,
    pub landmarks: LandmarkSet,
    pub control_names: Vec<String>,
}

const ON_SURFACE_TOL: f64 = 1e-6;

impl LandmarkTemplate {
    pub fn new(mesh: TriMesh, head: Option<TriMesh>, landmarks: LandmarkSet, control_names: Vec<String>) -> Result<Self> {
        let t = Self {
            mesh,
            head,
            landmarks,
            control_names,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        self.landmarks.validate()?;
        if let Some(n) = self.control_names.iter().find(|n| self.landmarks.position(n).is_none()) {
            return Err(Error::MissingLandmark(n.clone()));
        }
        let dist = surface_distances(&self.mesh, &self.landmarks.coords);
        if let Some((i, d)) = dist.iter().enumerate().find(|(_, d)| **d > ON_SURFACE_TOL) {
            return Err(Error::LandmarkFormat(format!(
                "template landmark {:?} is {d:.3e} mm off the template surface",
                self.landmarks.names[i]
            )));
        }
        Ok(())
    }

    pub fn from_bytes(face: &[u8], head: Option<&[u8]>, landmarks: &[u8], control_names: &[u8]) -> Result<Self> {
        Self::new(
            read_ply(face)?,
            head.map(read_ply).transpose()?,
            read_landmarks(landmarks, LandmarkFormat::Json)?,
            serde_json::from_slice(control_names)?,
        )
    }

    /// The bundled reference template (synthetic reference head).
    pub fn builtin() -> Self {
        Self::from_bytes(
            include_bytes!("../../data/template/face.ply"),
            Some(include_bytes!("../../data/template/head.ply")),
            include_bytes!("../../data/template/landmarks.json"),
            include_bytes!("../../data/template/control_names.json"),
        )
        .expect("bundled template is valid")
    }

    /// Reads `face.ply`, `landmarks.json`, `control_names.json` and, when
    /// present, `head.ply` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mesh = read_ply(&std::fs::read(dir.join("face.ply"))?)?;
        let head_path = dir.join("head.ply");
        let head = if head_path.exists() {
            Some(read_ply(&std::fs::read(head_path)?)?)
        } else {
            None
        };
        let landmarks = read_landmarks(&std::fs::read(dir.join("landmarks.json"))?, LandmarkFormat::Json)?;
        let control_names: Vec<String> = serde_json::from_slice(&std::fs::read(dir.join("control_names.json"))?)?;
        Self::new(mesh, head, landmarks, control_names)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("face.ply"), write_ply(&self.mesh, PlyFormat::BinaryLittleEndian))?;
        if let Some(h) = &self.head {
            std::fs::write(dir.join("head.ply"), write_ply(h, PlyFormat::BinaryLittleEndian))?;
        }
        std::fs::write(dir.join("landmarks.json"), write_landmarks(&self.landmarks, LandmarkFormat::Json)?)?;
        std::fs::write(dir.join("control_names.json"), serde_json::to_vec_pretty(&self.control_names)?)?;
        Ok(())
    }

    /// Control-point coordinates of the template itself.
    pub fn control_coords(&self) -> Vec<Vec3> {
        control_points(&self.landmarks, self).expect("validated template has its control names")
    }
}

/// Reference control points of the canonical aligned frame.
pub fn builtin_cp_ref() -> LandmarkSet {
    read_landmarks(include_bytes!("../../data/cp_ref.json"), LandmarkFormat::Json).expect("bundled control points are valid")
}

/// Rows of `lm` named by `tmpl.control_names`, in that order.
pub fn control_points(lm: &LandmarkSet, tmpl: &LandmarkTemplate) -> Result<Vec<Vec3>> {
    tmpl.control_names
        .iter()
        .map(|n| lm.get(n).ok_or_else(|| Error::MissingLandmark(n.clone())))
        .collect()
}
