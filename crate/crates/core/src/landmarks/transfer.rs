use super::icp::{icp_rigid, ICP_MAX_ITERS, ICP_TRIM};
use super::set::LandmarkSet;
use super::template::LandmarkTemplate;
use crate::mesh::{bbox_center, norm, sub, Bvh, SimilarityTransform, TriMesh, Vec3};
use crate::{Error, Result};

/// Residual above which a transfer is flagged for manual review, mm.
pub const REVIEW_GATE_MM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferOptions {
    pub seed: u64,
    pub review_gate: f64,
    pub max_iters: usize,
    pub trim: f64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            review_gate: REVIEW_GATE_MM,
            max_iters: ICP_MAX_ITERS,
            trim: ICP_TRIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub landmarks: LandmarkSet,
    /// Final trimmed ICP RMS, mm.
    pub residual: f64,
    pub needs_review: bool,
    /// Reference frame to target frame: coarse similarity then rigid ICP.
    pub transform: SimilarityTransform,
}

fn median_radius(mesh: &TriMesh) -> f64 {
    let n = mesh.vertices.len() as f64;
    let c = mesh.vertices.iter().fold([0.0; 3], |a, v| [a[0] + v[0], a[1] + v[1], a[2] + v[2]]);
    let c = [c[0] / n, c[1] / n, c[2] / n];
    let mut r: Vec<f64> = mesh.vertices.iter().map(|&v| norm(sub(v, c))).collect();
    r.sort_by(f64::total_cmp);
    let m = r.len() / 2;
    if r.len() % 2 == 1 {
        r[m]
    } else {
        0.5 * (r[m - 1] + r[m])
    }
}

/// Centre-and-scale alignment of `reference` onto `target`: bbox centres
/// coincide and the median vertex distances from the centroid agree.
pub fn coarse_alignment(reference: &TriMesh, target: &TriMesh) -> Result<SimilarityTransform> {
    let (cr, ct) = match (bbox_center(reference), bbox_center(target)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptyMesh),
    };
    let (rr, rt) = (median_radius(reference), median_radius(target));
    let s = if rr > 0.0 && rt > 0.0 { rt / rr } else { 1.0 };
    Ok(SimilarityTransform {
        s,
        r: SimilarityTransform::IDENTITY.r,
        t: [0, 1, 2].map(|d| ct[d] - s * cr[d]),
    })
}

/// Transfer the template landmarks onto `face` with default options.
pub fn transfer_landmarks(face: &TriMesh, tmpl: &LandmarkTemplate, seed: u64) -> Result<Transfer> {
    transfer_with(
        face,
        &tmpl.mesh,
        &tmpl.landmarks,
        &TransferOptions {
            seed,
            ..Default::default()
        },
    )
}

/// Register `reference` onto `target` and carry `landmarks` along, each
/// ending on its closest point of the target surface.
pub fn transfer_with(
    target: &TriMesh,
    reference: &TriMesh,
    landmarks: &LandmarkSet,
    opts: &TransferOptions,
) -> Result<Transfer> {
    if target.is_empty() || reference.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let coarse = coarse_alignment(reference, target)?;
    let src = reference.map_vertices(|v| coarse.apply(v));
    let icp = icp_rigid(&src, target, opts.max_iters, opts.trim, opts.seed)?;
    let xf = coarse.then(&icp.transform);
    let bvh = Bvh::new(target);
    let coords: Vec<Vec3> = landmarks
        .coords
        .iter()
        .map(|&p| bvh.closest_point(xf.apply(p)).expect("target is nonempty").0)
        .collect();
    Ok(Transfer {
        landmarks: LandmarkSet {
            names: landmarks.names.clone(),
            coords,
            subject_id: String::new(),
        },
        residual: icp.rms,
        needs_review: icp.rms > opts.review_gate,
        transform: xf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uv_sphere;

    #[test]
    fn coarse_alignment_matches_centre_and_scale() {
        let a = uv_sphere([1.0, 2.0, 3.0], 2.0, 8, 12);
        let b = uv_sphere([-4.0, 0.0, 9.0], 6.0, 8, 12);
        let c = coarse_alignment(&a, &b).unwrap();
        assert!((c.s - 3.0).abs() < 1e-12);
        let moved = c.apply([1.0, 2.0, 3.0]);
        assert!(norm(sub(moved, [-4.0, 0.0, 9.0])) < 1e-12);
    }
}
