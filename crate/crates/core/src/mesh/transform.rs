use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::trimesh::{scale, sub, TriMesh, Vec3};
use crate::{Error, Result};

/// `x -> s * R * x + t`. `r` is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub s: f64,
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self {
        s: 1.0,
        r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        t: [0.0; 3],
    };

    pub fn from_parts(s: f64, r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Self {
            s,
            r: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            t: [t[0], t[1], t[2]],
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.r[i][j])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.t)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.apply_scaled(p, self.s)
    }

    pub fn apply_rigid(&self, p: Vec3) -> Vec3 {
        self.apply_scaled(p, 1.0)
    }

    fn apply_scaled(&self, p: Vec3, s: f64) -> Vec3 {
        let r = &self.r;
        [0, 1, 2].map(|i| s * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + self.t[i])
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SimilarityTransform) -> SimilarityTransform {
        let r = next.rotation() * self.rotation();
        let t = next.s * next.rotation() * self.translation() + next.translation();
        Self::from_parts(next.s * self.s, &r, &t)
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation().transpose();
        Self::from_parts(1.0 / self.s, &rt, &(-(rt * self.translation()) / self.s))
    }

    /// Rotation angle of `R` in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let tr = self.r[0][0] + self.r[1][1] + self.r[2][2];
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).norm();
        if !(self.s > 0.0) || (r.determinant() - 1.0).abs() > 1e-9 || ortho > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "not a similarity: s = {}, det R = {}, |R^T R - I| = {ortho:e}",
                self.s,
                r.determinant()
            )));
        }
        Ok(())
    }
}

pub fn bbox_center(mesh: &TriMesh) -> Option<Vec3> {
    mesh.bbox().map(|(lo, hi)| [0, 1, 2].map(|d| 0.5 * (lo[d] + hi[d])))
}

/// Translate so the bounding-box centre sits at the origin. Returns the
/// translation that was applied.
pub fn center_mesh(mesh: &TriMesh) -> Result<(TriMesh, Vec3)> {
    let c = bbox_center(mesh).ok_or(Error::EmptyMesh)?;
    let shift = scale(c, -1.0);
    Ok((mesh.map_vertices(|v| sub(v, c)), shift))
}

/// Least-squares similarity mapping `src` onto `dst` (rotation without
/// reflection).
pub fn estimate_similarity(src: &[Vec3], dst: &[Vec3]) -> Result<SimilarityTransform> {
    fit(src, dst, true)
}

/// Least-squares rotation and translation (scale fixed at 1).
pub fn estimate_rigid(src: &[Vec3], dst: &[Vec3]) -> Result<SimilarityTransform> {
    fit(src, dst, false)
}

fn fit(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<SimilarityTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::DegenerateControlPoints(format!(
            "need matching sets of at least 3 points (got {} and {})",
            src.len(),
            dst.len()
        )));
    }
    if src.iter().chain(dst).flatten().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateControlPoints("non-finite coordinate".into()));
    }
    let n = src.len() as f64;
    let mean = |p: &[Vec3]| p.iter().fold(Vector3::zeros(), |a, v| a + Vector3::from(*v)) / n;
    let (mu_s, mu_d) = (mean(src), mean(dst));
    // Horn's quaternion method: the optimal rotation is the top eigenvector
    // of a symmetric 4x4 built from the cross-covariance
    let mut m = Matrix3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let x = Vector3::from(*a) - mu_s;
        let y = Vector3::from(*b) - mu_d;
        m += x * y.transpose();
        var_s += x.norm_squared();
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let nm = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nm);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let scale_ref = m.norm();
    if !(scale_ref > 0.0) || var_s <= 0.0 || l0 - l1 <= 1e-10 * scale_ref {
        return Err(Error::DegenerateControlPoints(format!(
            "rotation is not unique (point sets collinear or coincident; eigen gap {:.3e})",
            l0 - l1
        )));
    }
    let q = eig.eigenvectors.column(order[0]);
    let r = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix().into_inner();
    let s = if with_scale { l0 / var_s } else { 1.0 };
    let t = mu_d - s * r * mu_s;
    Ok(SimilarityTransform::from_parts(s, &r, &t))
}

/// `R v + t` when `rigid_only`, otherwise `s R v + t`.
pub fn apply_transform(mesh: &TriMesh, xf: &SimilarityTransform, rigid_only: bool) -> TriMesh {
    if rigid_only {
        mesh.map_vertices(|v| xf.apply_rigid(v))
    } else {
        mesh.map_vertices(|v| xf.apply(v))
    }
}
