use serde::{Deserialize, Serialize};

use super::components::remove_small_components;
use super::trimesh::{TriMesh, Vec3};
use crate::{Error, Result};

/// Face crop in the aligned head frame (y anterior, z superior), mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    #[serde(rename = "thY")]
    pub th_y: f64,
    #[serde(rename = "thZ_low")]
    pub th_z_low: f64,
    #[serde(rename = "thZ_high")]
    pub th_z_high: f64,
}

/// Offset of the default coronal cut behind the nose tip, mm. Deep enough
/// to keep the eye and mouth corners, which sit 20-35 mm behind the tip.
pub const DEFAULT_CROP_BEHIND_NOSE: f64 = 60.0;
/// Half-height of the default vertical band around the nose tip, mm.
pub const DEFAULT_CROP_HALF_HEIGHT: f64 = 95.0;

impl CropSpec {
    pub fn new(th_y: f64, th_z_low: f64, th_z_high: f64) -> Result<Self> {
        let c = Self {
            th_y,
            th_z_low,
            th_z_high,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.th_z_low < self.th_z_high) || !self.th_y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "crop needs finite thY and thZ_low < thZ_high (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Default crop anchored on the nose tip of the aligned reference.
    pub fn around_nose_tip(nose: Vec3) -> Self {
        Self {
            th_y: nose[1] - DEFAULT_CROP_BEHIND_NOSE,
            th_z_low: nose[2] - DEFAULT_CROP_HALF_HEIGHT,
            th_z_high: nose[2] + DEFAULT_CROP_HALF_HEIGHT,
        }
    }

    pub fn keeps(&self, p: Vec3) -> bool {
        p[1] >= self.th_y && p[2] >= self.th_z_low && p[2] <= self.th_z_high
    }

    /// Distance from `p` to the nearest crop plane.
    pub fn plane_distance(&self, p: Vec3) -> f64 {
        (p[1] - self.th_y)
            .abs()
            .min((p[2] - self.th_z_low).abs())
            .min((p[2] - self.th_z_high).abs())
    }
}

/// Keep the vertices in front of `thY` and inside the vertical band, then
/// drop pieces left small by the cut.
pub fn crop_face(mesh: &TriMesh, crop: &CropSpec) -> Result<TriMesh> {
    crop.validate()?;
    let keep: Vec<bool> = mesh.vertices.iter().map(|&v| crop.keeps(v)).collect();
    let cut = mesh.retain_vertices(&keep);
    if cut.is_empty() {
        return Err(Error::EmptyCrop);
    }
    Ok(remove_small_components(&cut, 0.9))
}
