//! Scalar voxel volumes, axis codes and reorientation.
//!
//! Voxel data is stored x-fastest: `index = x + nx * (y + ny * z)`.
//! World directions follow the NIfTI convention (+x Right, +y Anterior,
//! +z Superior) and an axis code names, per voxel axis, the anatomical
//! direction in which that axis' index increases.

mod nifti;

pub use nifti::{parse_nifti, read_nifti, save_nifti, write_nifti};

use nalgebra::Matrix3;
use std::fmt;

use crate::{Error, Result};

/// Off-axis component magnitude above which a rotation is reported as oblique.
pub const OBLIQUE_WARN: f64 = 0.3;

const POSITIVE: [char; 3] = ['R', 'A', 'S'];
const NEGATIVE: [char; 3] = ['L', 'P', 'I'];

/// Signed permutation mapping voxel axes onto world axes.
///
/// Voxel axis `j` runs along world axis `axes[j]`, in the positive world
/// direction when `signs[j] == 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisMap {
    axes: [u8; 3],
    signs: [i8; 3],
}

impl AxisMap {
    pub const IDENTITY: AxisMap = AxisMap {
        axes: [0, 1, 2],
        signs: [1, 1, 1],
    };

    /// Frame assumed by the head-processing stages: x toward the subject's
    /// Left, y Anterior, z Superior (per-axis code "LAS").
    ///
    /// This frame is a reflection of the NIfTI world, so it is not one of the
    /// 24 proper [`OrientationCode`]s. Distances, and therefore every
    /// downstream shape statistic, are unaffected by the reflection.
    pub const HEAD: AxisMap = AxisMap {
        axes: [0, 1, 2],
        signs: [-1, 1, 1],
    };

    pub fn new(axes: [u8; 3], signs: [i8; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for (&a, &s) in axes.iter().zip(&signs) {
            if a > 2 || seen[a as usize] || (s != 1 && s != -1) {
                return Err(Error::DegenerateOrientation(format!(
                    "not a signed permutation: axes {axes:?} signs {signs:?}"
                )));
            }
            seen[a as usize] = true;
        }
        Ok(Self { axes, signs })
    }

    /// Parse a three-letter code such as `"RAS"` or `"LPI"`.
    pub fn from_label(label: &str) -> Result<Self> {
        let chars: Vec<char> = label.trim().to_ascii_uppercase().chars().collect();
        if chars.len() != 3 {
            return Err(Error::DegenerateOrientation(format!("bad axis code {label:?}")));
        }
        let mut axes = [0u8; 3];
        let mut signs = [0i8; 3];
        for (j, c) in chars.iter().enumerate() {
            if let Some(a) = POSITIVE.iter().position(|p| p == c) {
                axes[j] = a as u8;
                signs[j] = 1;
            } else if let Some(a) = NEGATIVE.iter().position(|p| p == c) {
                axes[j] = a as u8;
                signs[j] = -1;
            } else {
                return Err(Error::DegenerateOrientation(format!("bad axis letter {c:?}")));
            }
        }
        Self::new(axes, signs)
    }

    pub fn label(&self) -> String {
        (0..3)
            .map(|j| {
                let a = self.axes[j] as usize;
                if self.signs[j] > 0 {
                    POSITIVE[a]
                } else {
                    NEGATIVE[a]
                }
            })
            .collect()
    }

    pub fn axes(&self) -> [u8; 3] {
        self.axes
    }

    pub fn signs(&self) -> [i8; 3] {
        self.signs
    }

    /// Column `j` is the world direction of voxel axis `j`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            m[(self.axes[j] as usize, j)] = self.signs[j] as f64;
        }
        m
    }

    pub fn determinant(&self) -> i8 {
        // parity of the permutation times the product of signs
        let a = self.axes;
        let inversions = (a[0] > a[1]) as u8 + (a[0] > a[2]) as u8 + (a[1] > a[2]) as u8;
        let parity = if inversions % 2 == 0 { 1 } else { -1 };
        parity * self.signs[0] * self.signs[1] * self.signs[2]
    }

    pub fn is_right_handed(&self) -> bool {
        self.determinant() == 1
    }

    /// Snap an arbitrary voxel-to-world direction matrix to the nearest signed
    /// permutation: each column keeps its largest-magnitude component.
    ///
    /// Returns the map and the largest off-axis component over the normalized
    /// columns (0 for an exactly axis-aligned input).
    pub fn snap(rotation: &Matrix3<f64>) -> Result<(AxisMap, f64)> {
        let mut axes = [0u8; 3];
        let mut signs = [0i8; 3];
        let mut max_off = 0.0f64;
        for j in 0..3 {
            let col = rotation.column(j);
            let norm = col.norm();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(Error::DegenerateOrientation(format!("column {j} is zero")));
            }
            let mut best = 0;
            for i in 1..3 {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            axes[j] = best as u8;
            signs[j] = if col[best] >= 0.0 { 1 } else { -1 };
            for i in 0..3 {
                if i != best {
                    max_off = max_off.max(col[i].abs() / norm);
                }
            }
        }
        let map = AxisMap::new(axes, signs).map_err(|_| {
            Error::DegenerateOrientation(format!(
                "two voxel axes snap to the same world axis ({axes:?})"
            ))
        })?;
        Ok((map, max_off))
    }
}

impl fmt::Debug for AxisMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AxisMap({})", self.label())
    }
}

impl fmt::Display for AxisMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A right-handed axis code: one of the 24 proper signed permutations.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrientationCode(AxisMap);

impl OrientationCode {
    /// x Right, y Anterior, z Superior.
    pub const RAS: OrientationCode = OrientationCode(AxisMap::IDENTITY);
    /// x Left, y Superior, z Anterior.
    pub const LSA: OrientationCode = OrientationCode(AxisMap {
        axes: [0, 2, 1],
        signs: [-1, 1, 1],
    });

    pub fn new(map: AxisMap) -> Result<Self> {
        if map.is_right_handed() {
            Ok(Self(map))
        } else {
            Err(Error::DegenerateOrientation(format!(
                "{} is left-handed",
                map.label()
            )))
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        Self::new(AxisMap::from_label(label)?)
    }

    pub fn map(&self) -> AxisMap {
        self.0
    }

    pub fn label(&self) -> String {
        self.0.label()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.matrix()
    }

    /// All 24 right-handed codes, in a fixed order.
    pub fn all() -> Vec<OrientationCode> {
        const PERMS: [[u8; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = Vec::with_capacity(24);
        for axes in PERMS {
            for bits in 0..8u8 {
                let signs = [0, 1, 2].map(|k| if bits >> k & 1 == 1 { -1 } else { 1 });
                let map = AxisMap { axes, signs };
                if map.is_right_handed() {
                    out.push(OrientationCode(map));
                }
            }
        }
        out
    }
}

impl From<OrientationCode> for AxisMap {
    fn from(code: OrientationCode) -> Self {
        code.0
    }
}

impl fmt::Debug for OrientationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OrientationCode({})", self.label())
    }
}

impl fmt::Display for OrientationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Snap a voxel-to-world rotation to its right-handed axis code.
pub fn get_orientation(rotation: &Matrix3<f64>) -> Result<OrientationCode> {
    if !(rotation.determinant() > 0.0) {
        return Err(Error::DegenerateOrientation(
            "rotation determinant must be positive".into(),
        ));
    }
    let (map, _) = AxisMap::snap(rotation)?;
    OrientationCode::new(map)
}

/// An oriented scalar voxel grid in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<f64>,
    pub orientation: AxisMap,
    /// World position (mm) of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let v = Self {
            dims,
            spacing,
            data,
            orientation: AxisMap::IDENTITY,
            origin: [0.0; 3],
        };
        v.validate()?;
        Ok(v)
    }

    pub fn with_orientation(mut self, orientation: impl Into<AxisMap>) -> Self {
        self.orientation = orientation.into();
        self
    }

    /// Build a volume by evaluating `f(x, y, z)` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("zero dimension in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!("bad spacing {:?}", self.spacing)));
        }
        if self.data.len() != self.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} != {}",
                self.data.len(),
                self.len()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite value at voxel {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Same grid with new voxel values.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.len());
        Self {
            dims: self.dims,
            spacing: self.spacing,
            data,
            orientation: self.orientation,
            origin: self.origin,
        }
    }

    /// Average 2x2x2 blocks; trailing odd slices are dropped (a dimension of
    /// 1 stays 1).
    pub fn downsample2(&self) -> Self {
        let nd = self.dims.map(|d| (d / 2).max(1));
        let f = self.dims.map(|d| if d >= 2 { 2 } else { 1 });
        let mut data = Vec::with_capacity(nd.iter().product());
        for z in 0..nd[2] {
            for y in 0..nd[1] {
                for x in 0..nd[0] {
                    let mut acc = 0.0;
                    for dz in 0..f[2] {
                        for dy in 0..f[1] {
                            for dx in 0..f[0] {
                                acc += self.get(x * f[0] + dx, y * f[1] + dy, z * f[2] + dz);
                            }
                        }
                    }
                    data.push(acc / (f[0] * f[1] * f[2]) as f64);
                }
            }
        }
        Self {
            dims: nd,
            spacing: [0, 1, 2].map(|k| self.spacing[k] * f[k] as f64),
            data,
            orientation: self.orientation,
            origin: self.origin,
        }
    }
}

/// Permute and flip the voxel grid so its axes follow `target`.
///
/// Voxel values are moved, never resampled; spacing follows its axis.
pub fn reorient(v: &Volume, target: impl Into<AxisMap>) -> Volume {
    let target = target.into();
    if v.orientation == target {
        return v.clone();
    }
    let src = v.orientation;
    let strides = [1, v.dims[0], v.dims[0] * v.dims[1]];
    let mut dims = [0usize; 3];
    let mut spacing = [0f64; 3];
    let mut step = [0isize; 3];
    let mut base = 0isize;
    let mut src_axis_of = [0usize; 3];
    let mut flipped = [false; 3];
    for j in 0..3 {
        let i = (0..3)
            .find(|&i| src.axes[i] == target.axes[j])
            .expect("signed permutations cover every world axis");
        let flip = src.signs[i] != target.signs[j];
        src_axis_of[j] = i;
        flipped[j] = flip;
        dims[j] = v.dims[i];
        spacing[j] = v.spacing[i];
        if flip {
            step[j] = -(strides[i] as isize);
            base += ((v.dims[i] - 1) * strides[i]) as isize;
        } else {
            step[j] = strides[i] as isize;
        }
    }
    let mut data = Vec::with_capacity(v.data.len());
    for z in 0..dims[2] {
        let oz = base + z as isize * step[2];
        for y in 0..dims[1] {
            let oy = oz + y as isize * step[1];
            for x in 0..dims[0] {
                data.push(v.data[(oy + x as isize * step[0]) as usize]);
            }
        }
    }
    // world position of the source voxel that lands at the new origin
    let mut first = [0usize; 3];
    for j in 0..3 {
        if flipped[j] {
            first[src_axis_of[j]] = v.dims[src_axis_of[j]] - 1;
        }
    }
    let m = src.matrix();
    let mut origin = v.origin;
    for i in 0..3 {
        let off = first[i] as f64 * v.spacing[i];
        for w in 0..3 {
            origin[w] += m[(w, i)] * off;
        }
    }
    Volume {
        dims,
        spacing,
        data,
        orientation: target,
        origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn ramp(dims: [usize; 3]) -> Volume {
        Volume::from_fn(dims, [1.0, 2.0, 3.0], |x, y, z| {
            (x + 10 * y + 100 * z) as f64
        })
        .unwrap()
    }

    #[test]
    fn exactly_24_right_handed_codes() {
        let all = OrientationCode::all();
        assert_eq!(all.len(), 24);
        let labels: std::collections::HashSet<_> = all.iter().map(|c| c.label()).collect();
        assert_eq!(labels.len(), 24);
        for c in &all {
            let m = c.matrix();
            assert!((m.determinant() - 1.0).abs() < 1e-12);
            for r in 0..3 {
                assert_eq!(m.row(r).iter().filter(|v| **v != 0.0).count(), 1);
                assert_eq!(m.column(r).iter().filter(|v| **v != 0.0).count(), 1);
            }
        }
    }

    #[test]
    fn identity_is_ras() {
        let code = get_orientation(&Matrix3::identity()).unwrap();
        assert_eq!(code, OrientationCode::RAS);
        assert_eq!(code.label(), "RAS");
    }

    #[test]
    fn lsa_label_round_trip() {
        assert_eq!(OrientationCode::LSA.label(), "LSA");
        assert_eq!(OrientationCode::from_label("lsa").unwrap(), OrientationCode::LSA);
        assert_eq!(AxisMap::HEAD.label(), "LAS");
        assert!(OrientationCode::from_label("LAS").is_err());
    }

    #[test]
    fn exact_permutations_are_fixed_points() {
        for c in OrientationCode::all() {
            assert_eq!(get_orientation(&c.matrix()).unwrap(), c);
        }
    }

    #[test]
    fn small_rotation_snaps_to_ras() {
        let r = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 5f64.to_radians());
        let m = *r.matrix();
        // per-column argmax oracle
        for j in 0..3 {
            let col = m.column(j);
            let arg = (0..3).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap();
            assert_eq!(arg, j);
            assert!(col[arg] > 0.0);
        }
        assert_eq!(get_orientation(&m).unwrap(), OrientationCode::RAS);
    }

    #[test]
    fn colliding_columns_are_rejected() {
        let m = Matrix3::new(1.0, 0.9, 0.0, 0.1, 0.2, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(get_orientation(&m), Err(Error::DegenerateOrientation(_))));
    }

    #[test]
    fn reorient_identity_is_bitwise_copy() {
        let v = ramp([3, 4, 5]).with_orientation(OrientationCode::LSA);
        let r = reorient(&v, OrientationCode::LSA);
        assert_eq!(r, v);
    }

    #[test]
    fn reorient_moves_spacing_with_axes() {
        let v = ramp([3, 4, 5]);
        let r = reorient(&v, OrientationCode::LSA);
        // LSA: new x = -old x, new y = old z, new z = old y
        assert_eq!(r.dims, [3, 5, 4]);
        assert_eq!(r.spacing, [1.0, 3.0, 2.0]);
        assert_eq!(r.get(0, 0, 0), v.get(2, 0, 0));
        assert_eq!(r.get(0, 1, 0), v.get(2, 0, 1));
        assert_eq!(r.get(1, 0, 1), v.get(1, 1, 0));
        assert_eq!(r.origin, [2.0, 0.0, 0.0]);
    }

    #[test]
    fn reorient_is_idempotent_and_preserves_values() {
        let v = ramp([3, 4, 5]);
        for c in OrientationCode::all() {
            let once = reorient(&v, c);
            assert_eq!(reorient(&once, c), once);
            let mut a = v.data.clone();
            let mut b = once.data.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
            assert_eq!(reorient(&once, OrientationCode::LSA), reorient(&v, OrientationCode::LSA));
        }
    }

    #[test]
    fn downsample_averages_blocks() {
        let v = Volume::from_fn([4, 2, 3], [1.0; 3], |x, _, _| x as f64).unwrap();
        let d = v.downsample2();
        assert_eq!(d.dims, [2, 1, 1]);
        assert_eq!(d.data, vec![0.5, 2.5]);
        assert_eq!(d.spacing, [2.0, 2.0, 2.0]);
    }
}
