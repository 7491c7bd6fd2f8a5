//! Synthetic MRI phantoms: an analytic head (scalp, skull, brain, facial
//! relief) and simple test solids, plus the reference landmark template
//! built from the head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::enhance::{enhance_volume, ReferenceHistogram};
use crate::landmarks::{LandmarkSet, LandmarkTemplate, CONTROL_NAMES};
use crate::mesh::{
    ambient_occlusion, center_mesh, crop_face, empty_interior, ray_triangle, remove_small_components, CropSpec,
    TriMesh, Vec3,
};
use crate::reconstruct::{extract_isosurface, intensity_stats, CalibrationSample};
use crate::volume::{AxisMap, Volume};
use crate::{Error, Result};

pub const SCALP: f64 = 160.0;
pub const SKULL: f64 = 25.0;
pub const BRAIN: f64 = 100.0;
pub const SCALP_THICKNESS: f64 = 8.0;
pub const SKULL_THICKNESS: f64 = 6.0;
/// Isosurface level separating air from scalp on a clean phantom.
pub const CLEAN_THRESHOLD: f64 = 0.5 * SCALP;
/// Ambient-occlusion seed used for the built-in template.
pub const TEMPLATE_SEED: u64 = 7;

/// Shape parameters of the head, mm, in the head frame (x left, y anterior,
/// z superior, origin at the head centre).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadParams {
    pub radii: Vec3,
    pub nose: Vec3,
    pub nose_z: f64,
    pub eye_spacing: f64,
    pub eye_z: f64,
    pub socket: Vec3,
    pub mouth_width: f64,
    pub mouth_z: f64,
    pub chin: Vec3,
    pub chin_z: f64,
}

impl HeadParams {
    pub fn reference() -> Self {
        Self {
            radii: [70.0, 90.0, 105.0],
            nose: [12.0, 22.0, 26.0],
            nose_z: -2.0,
            eye_spacing: 32.0,
            eye_z: 30.0,
            socket: [14.0, 10.0, 8.0],
            mouth_width: 24.0,
            mouth_z: -45.0,
            chin: [22.0, 14.0, 14.0],
            chin_z: -75.0,
        }
    }

    /// Reference shape with seeded individual variation (a few percent per
    /// parameter).
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut j = |frac: f64| 1.0 + frac * (2.0 * rng.random::<f64>() - 1.0);
        let r = Self::reference();
        Self {
            radii: r.radii.map(|v| v * j(0.04)),
            nose: r.nose.map(|v| v * j(0.08)),
            nose_z: r.nose_z + 3.0 * (j(1.0) - 1.0),
            eye_spacing: r.eye_spacing * j(0.05),
            eye_z: r.eye_z + 2.0 * (j(1.0) - 1.0),
            socket: r.socket,
            mouth_width: r.mouth_width * j(0.08),
            mouth_z: r.mouth_z + 3.0 * (j(1.0) - 1.0),
            chin: r.chin.map(|v| v * j(0.06)),
            chin_z: r.chin_z + 3.0 * (j(1.0) - 1.0),
        }
    }

    /// Same head with every nose radius multiplied by `f`.
    pub fn with_nose_scale(mut self, f: f64) -> Self {
        self.nose = self.nose.map(|v| v * f);
        self
    }

    /// y of the head ellipsoid surface at (x, z), front side.
    fn front_y(&self, x: f64, z: f64) -> f64 {
        let [a, b, c] = self.radii;
        b * (1.0 - (x / a).powi(2) - (z / c).powi(2)).max(0.0).sqrt()
    }

    fn nose_center(&self) -> Vec3 {
        [0.0, self.front_y(0.0, self.nose_z) - 6.0, self.nose_z]
    }

    fn chin_center(&self) -> Vec3 {
        [0.0, self.front_y(0.0, self.chin_z) - 6.0, self.chin_z]
    }

    fn socket_center(&self, side: f64) -> Vec3 {
        let x = side * self.eye_spacing;
        [x, self.front_y(x, self.eye_z) + self.socket[1] - 3.5, self.eye_z]
    }

    fn mouth_center(&self) -> Vec3 {
        [0.0, self.front_y(0.0, self.mouth_z) + 3.5, self.mouth_z]
    }

    /// Half extents of a box enclosing the head with a margin.
    pub fn half_extent(&self) -> Vec3 {
        let tip = self.nose_center()[1] + self.nose[1];
        let m = 14.0;
        [self.radii[0] + m, tip.max(self.radii[1]) + m, self.radii[2] + m]
    }

    /// Signed radial distance to the skin (negative inside), mm.
    pub fn skin_distance(&self, p: Vec3) -> f64 {
        let head = ellipsoid_distance(p, [0.0; 3], self.radii);
        let nose = ellipsoid_distance(p, self.nose_center(), self.nose);
        let chin = ellipsoid_distance(p, self.chin_center(), self.chin);
        let mut d = head.min(nose).min(chin);
        for side in [-1.0, 1.0] {
            d = d.max(-ellipsoid_distance(p, self.socket_center(side), self.socket));
        }
        d.max(-ellipsoid_distance(p, self.mouth_center(), [self.mouth_width, 6.0, 2.5]))
    }

    /// Depth below the head ellipsoid surface, mm (negative outside).
    fn depth(&self, p: Vec3) -> f64 {
        -ellipsoid_distance(p, [0.0; 3], self.radii)
    }

    /// Probe positions (x, z) of the 20 landmarks; each landmark is the
    /// first surface point hit by a ray cast backwards from the front.
    pub fn landmark_probes(&self) -> Vec<(&'static str, f64, f64)> {
        let e = self.eye_spacing;
        let (n, nz) = (self.nose, self.nose_z);
        let (mw, mz) = (self.mouth_width, self.mouth_z);
        vec![
            ("glabella", 0.0, self.eye_z + 22.0),
            ("nasion", 0.0, self.eye_z + 4.0),
            ("eye_inner_right", -(e - 10.0), self.eye_z),
            ("eye_inner_left", e - 10.0, self.eye_z),
            ("eye_outer_right", -(e + 12.0), self.eye_z),
            ("eye_outer_left", e + 12.0, self.eye_z),
            ("nose_tip", 0.0, nz),
            ("subnasale", 0.0, nz - 0.8 * n[2]),
            ("alar_right", -0.85 * n[0], nz - 0.5 * n[2]),
            ("alar_left", 0.85 * n[0], nz - 0.5 * n[2]),
            ("mouth_corner_right", -0.9 * mw, mz),
            ("mouth_corner_left", 0.9 * mw, mz),
            ("upper_lip", 0.0, mz + 6.0),
            ("lower_lip", 0.0, mz - 6.0),
            ("stomion", 0.0, mz),
            ("sublabiale", 0.0, mz - 14.0),
            ("pogonion", 0.0, self.chin_z),
            ("gnathion", 0.0, self.chin_z - 0.8 * self.chin[2]),
            ("cheek_right", -48.0, 5.0),
            ("cheek_left", 48.0, 5.0),
        ]
    }
}

/// `|p - c| (1 - 1/k)` with `k` the normalized ellipsoid radius of `p`:
/// the distance to the surface along the ray from the centre.
fn ellipsoid_distance(p: Vec3, c: Vec3, r: Vec3) -> f64 {
    let q = [0, 1, 2].map(|d| p[d] - c[d]);
    let len = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    let k = (0..3).map(|d| (q[d] / r[d]).powi(2)).sum::<f64>().sqrt();
    if k == 0.0 {
        return -r.iter().copied().fold(f64::INFINITY, f64::min);
    }
    len * (1.0 - 1.0 / k)
}

/// Acquisition settings of a synthetic scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Isotropic voxel size, mm.
    pub spacing: f64,
    /// Standard deviation of the Rician noise.
    pub noise: f64,
    /// Multiplicative bias field spans [1 - a, 1 + a].
    pub bias: f64,
    /// Global intensity gain.
    pub gain: f64,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            spacing: 2.0,
            noise: 4.0,
            bias: 0.15,
            gain: 1.0,
            seed: 0,
        }
    }
}

impl ScanOptions {
    pub fn clean(spacing: f64) -> Self {
        Self {
            spacing,
            noise: 0.0,
            bias: 0.0,
            gain: 1.0,
            seed: 0,
        }
    }
}

/// Noise-free tissue intensity at `p` with partial-volume blending over a
/// voxel of size `h`.
pub fn head_intensity(params: &HeadParams, p: Vec3, h: f64) -> f64 {
    let occ = |d: f64| (0.5 - d / h).clamp(0.0, 1.0);
    let skin = occ(params.skin_distance(p));
    if skin == 0.0 {
        return 0.0;
    }
    let depth = params.depth(p);
    let skull = occ(SCALP_THICKNESS - depth);
    let brain = occ(SCALP_THICKNESS + SKULL_THICKNESS - depth);
    skin * (SCALP + (SKULL - SCALP) * skull + (BRAIN - SKULL) * brain)
}

/// Voxel grid of the head in the head frame ("LAS" axis code), with the
/// world origin at the head centre.
pub fn head_phantom(params: &HeadParams, scan: &ScanOptions) -> Result<Volume> {
    if !(scan.spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {}", scan.spacing)));
    }
    let half = params.half_extent();
    let dims = half.map(|e| (2.0 * e / scan.spacing).ceil() as usize + 1);
    let c = dims.map(|n| (n - 1) as f64 / 2.0);
    let h = scan.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    let normal = Normal::new(0.0, scan.noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut vol = Volume::from_fn(dims, [h; 3], |x, y, z| {
        let p = [(x as f64 - c[0]) * h, (y as f64 - c[1]) * h, (z as f64 - c[2]) * h];
        let u = [0, 1, 2].map(|d| p[d] / half[d]);
        let field = 1.0 + scan.bias * (0.5 * u[0] + 0.3 * u[1] * u[2] + 0.2 * (2.0 * u[2] * u[2] - 1.0));
        let s = scan.gain * field * head_intensity(params, p, h);
        if scan.noise > 0.0 {
            let (n1, n2): (f64, f64) = (normal.sample(&mut rng), normal.sample(&mut rng));
            ((s + n1).powi(2) + n2 * n2).sqrt()
        } else {
            s
        }
    })?
    .with_orientation(AxisMap::HEAD);
    let m = AxisMap::HEAD.matrix();
    let o = c.map(|v| -v * h);
    vol.origin = [0, 1, 2].map(|i| (0..3).map(|j| m[(i, j)] * o[j]).sum());
    Ok(vol)
}

/// Solid ball of intensity 100 with radius `r` voxels centred in a cube of
/// side `n`, linearly blended over one voxel.
pub fn sphere_volume(n: usize, r: f64) -> Volume {
    let c = (n - 1) as f64 / 2.0;
    Volume::from_fn([n; 3], [1.0; 3], |x, y, z| {
        let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
        100.0 * (0.5 - (d - r)).clamp(0.0, 1.0)
    })
    .expect("positive dims")
}

/// First intersection of a ray with any triangle (brute force).
pub fn first_hit(mesh: &TriMesh, o: Vec3, d: Vec3) -> Option<Vec3> {
    (0..mesh.triangles.len())
        .filter_map(|t| ray_triangle(o, d, &mesh.triangle(t)))
        .min_by(f64::total_cmp)
        .map(|t| [0, 1, 2].map(|k| o[k] + t * d[k]))
}

fn round_to_f32(mesh: &TriMesh) -> TriMesh {
    mesh.map_vertices(|v| v.map(|c| c as f32 as f64))
}

/// Head surface of a phantom scan as the pipeline sees it after centring,
/// plus the translation taking head-frame points into that centred frame.
pub fn centered_head_mesh(vol: &Volume, threshold: f64) -> Result<(TriMesh, Vec3)> {
    let iso = extract_isosurface(vol, threshold).value;
    if iso.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let head = remove_small_components(&iso, 0.9);
    let (centered, shift) = center_mesh(&head)?;
    // head frame -> isosurface frame is + c * spacing, then the centring shift
    let c = vol.dims.map(|n| (n - 1) as f64 / 2.0);
    let offset = [0, 1, 2].map(|d| c[d] * vol.spacing[d] + shift[d]);
    Ok((centered, offset))
}

/// Landmarks on `mesh` by casting each probe ray from the front; `offset`
/// maps head-frame probe coordinates into the mesh frame.
pub fn probe_landmarks(params: &HeadParams, mesh: &TriMesh, offset: Vec3) -> Result<LandmarkSet> {
    let front = mesh.bbox().map_or(0.0, |b| b.1[1]) + 10.0;
    let mut names = Vec::new();
    let mut coords = Vec::new();
    for (name, x, z) in params.landmark_probes() {
        let o = [x + offset[0], front, z + offset[2]];
        let hit = first_hit(mesh, o, [0.0, -1.0, 0.0])
            .ok_or_else(|| Error::MissingLandmark(format!("{name} probe missed the surface")))?;
        names.push(name.to_string());
        coords.push(hit);
    }
    LandmarkSet::new(names, coords, "template")
}

/// The reference template: the clean reference head at 1 mm, emptied by
/// ambient occlusion, cropped around its nose tip, with probed landmarks.
/// Vertices are rounded to float32 so the bundle survives a PLY round trip.
pub fn build_template(spacing: f64) -> Result<LandmarkTemplate> {
    let params = HeadParams::reference();
    let vol = head_phantom(&params, &ScanOptions::clean(spacing))?;
    let (head, offset) = centered_head_mesh(&vol, CLEAN_THRESHOLD)?;
    let ao = ambient_occlusion(&head, crate::mesh::DEFAULT_RAYS, TEMPLATE_SEED)?.value;
    let mut emptied = empty_interior(&ao, 0.0, 0.25)?.value;
    emptied.quality = None;
    let head = round_to_f32(&emptied);
    let on_head = probe_landmarks(&params, &head, offset)?;
    let nose = on_head.get("nose_tip").expect("probe list has nose_tip");
    let face = crop_face(&head, &CropSpec::around_nose_tip(nose))?;
    let landmarks = probe_landmarks(&params, &face, offset)?;
    LandmarkTemplate::new(
        face,
        Some(head),
        landmarks,
        CONTROL_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Calibration sample from a phantom scan: intensity statistics of the
/// enhanced volume and the "manual" threshold, taken as the midpoint between
/// the mean enhanced intensity of clear air (more than two voxels outside the
/// skin) and of clear scalp (at least one voxel inside both skin and scalp).
pub fn calibration_sample(
    params: &HeadParams,
    scan: &ScanOptions,
    reference: &ReferenceHistogram,
) -> Result<CalibrationSample> {
    let raw = head_phantom(params, scan)?;
    let enhanced = enhance_volume(&raw, reference)?.value.volume;
    let (mean, max) = intensity_stats(&enhanced)?;
    let h = scan.spacing;
    let c = raw.dims.map(|n| (n - 1) as f64 / 2.0);
    let (mut air, mut n_air, mut scalp, mut n_scalp) = (0.0, 0usize, 0.0, 0usize);
    for z in 0..raw.dims[2] {
        for y in 0..raw.dims[1] {
            for x in 0..raw.dims[0] {
                let p = [(x as f64 - c[0]) * h, (y as f64 - c[1]) * h, (z as f64 - c[2]) * h];
                let d = params.skin_distance(p);
                let value = enhanced.get(x, y, z);
                if d > 2.0 * h {
                    air += value;
                    n_air += 1;
                } else if d < -h && params.depth(p) < SCALP_THICKNESS - h {
                    scalp += value;
                    n_scalp += 1;
                }
            }
        }
    }
    if n_air == 0 || n_scalp == 0 {
        return Err(Error::InvalidArgument("phantom grid too coarse to separate air and scalp".into()));
    }
    let threshold = 0.5 * (air / n_air as f64 + scalp / n_scalp as f64);
    Ok(CalibrationSample { mean, max, threshold })
}

/// Scan settings drawn for calibration sample `seed`: gain 0.5-3, Rician
/// noise 1-10, bias amplitude 0-0.25.
pub fn calibration_scan(spacing: f64, seed: u64) -> ScanOptions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1_ab1e);
    ScanOptions {
        spacing,
        gain: rng.random_range(0.5..3.0),
        noise: rng.random_range(1.0..10.0),
        bias: rng.random_range(0.0..0.25),
        seed,
    }
}

/// Reference intensity histogram of a clean-ish reference scan.
pub fn reference_histogram(levels: usize) -> Result<ReferenceHistogram> {
    let vol = head_phantom(&HeadParams::reference(), &ScanOptions::default())?;
    ReferenceHistogram::from_volume(&vol, levels, "mrface-reference-head")
}
