use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::mesh::{estimate_rigid, Vec3};
use crate::{Error, Result};

pub const GPA_TOL: f64 = 1e-10;
pub const GPA_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpaResult {
    pub mean_shape: Vec<Vec3>,
    /// One flattened aligned configuration per subject.
    pub procrustes_coords: Vec<Vec<f64>>,
    pub centroid_sizes: Vec<f64>,
    /// (3l) x p, filled by [`pca`].
    pub loadings: Vec<Vec<f64>>,
    /// k x p, filled by [`pca`].
    pub scores: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Square root of the summed squared distances to the centroid.
pub fn centroid_size(config: &[Vec3]) -> f64 {
    if config.is_empty() {
        return 0.0;
    }
    let c = centroid(config);
    config
        .iter()
        .map(|p| (0..3).map(|d| (p[d] - c[d]).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn centroid(config: &[Vec3]) -> Vec3 {
    let n = config.len() as f64;
    let s = config.iter().fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
    s.map(|v| v / n)
}

/// Centred copy at unit centroid size.
fn normalize(config: &[Vec3]) -> Result<(Vec<Vec3>, f64)> {
    let cs = centroid_size(config);
    if !(cs > 0.0) || !cs.is_finite() {
        return Err(Error::DegenerateConfiguration(format!("centroid size {cs}")));
    }
    let c = centroid(config);
    Ok((config.iter().map(|p| [0, 1, 2].map(|d| (p[d] - c[d]) / cs)).collect(), cs))
}

fn rotate(config: &[Vec3], r: &Matrix3<f64>) -> Vec<Vec3> {
    config
        .iter()
        .map(|p| {
            let v = r * Vector3::from(*p);
            [v[0], v[1], v[2]]
        })
        .collect()
}

/// Rotation (det +1) taking centred `x` closest to centred `target`.
fn align_rotation(x: &[Vec3], target: &[Vec3]) -> Result<Matrix3<f64>> {
    estimate_rigid(x, target)
        .map(|t| t.rotation())
        .map_err(|e| Error::DegenerateConfiguration(e.to_string()))
}

fn dist2(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>())
        .sum()
}

/// Distance between two configurations after centring, unit scaling and
/// optimal rotation.
pub fn procrustes_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DegenerateConfiguration("landmark counts differ".into()));
    }
    let (a, _) = normalize(a)?;
    let (b, _) = normalize(b)?;
    let r = align_rotation(&b, &a)?;
    Ok(dist2(&a, &rotate(&b, &r)).sqrt())
}

/// Rotation to the principal axes of `mean`, signed so each axis has
/// positive third moment and the frame is right-handed.
fn canonical_frame(mean: &[Vec3]) -> Matrix3<f64> {
    let mut s = Matrix3::zeros();
    for p in mean {
        let v = Vector3::from(*p);
        s += v * v.transpose();
    }
    let eig = SymmetricEigen::new(s);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    for a in axes.iter_mut().take(2) {
        let proj: Vec<f64> = mean.iter().map(|p| a.dot(&Vector3::from(*p))).collect();
        let m3: f64 = proj.iter().map(|x| x.powi(3)).sum();
        let flip = if m3.abs() > 1e-12 {
            m3 < 0.0
        } else {
            proj.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0)
        };
        if flip {
            *a = -*a;
        }
    }
    axes[2] = axes[0].cross(&axes[1]);
    Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()])
}

/// Generalized Procrustes analysis of pooled configurations. The result is
/// expressed in the principal-axes frame of the mean shape.
pub fn gpa(configs: &[Vec<Vec3>]) -> Result<GpaResult> {
    if configs.len() < 2 {
        return Err(Error::DegenerateConfiguration(format!("need at least 2 configurations, got {}", configs.len())));
    }
    let l = configs[0].len();
    if l < 3 || configs.iter().any(|c| c.len() != l) {
        return Err(Error::DegenerateConfiguration("configurations need the same count of at least 3 landmarks".into()));
    }
    let mut shapes = Vec::with_capacity(configs.len());
    let mut sizes = Vec::with_capacity(configs.len());
    for c in configs {
        let (s, cs) = normalize(c)?;
        shapes.push(s);
        sizes.push(cs);
    }
    let mut mean = shapes[0].clone();
    let (mut iterations, mut converged) = (0, false);
    while iterations < GPA_MAX_ITERS {
        iterations += 1;
        for s in shapes.iter_mut() {
            let r = align_rotation(s, &mean)?;
            *s = rotate(s, &r);
        }
        let k = shapes.len() as f64;
        let avg: Vec<Vec3> = (0..l)
            .map(|i| [0, 1, 2].map(|d| shapes.iter().map(|s| s[i][d]).sum::<f64>() / k))
            .collect();
        let (next, _) = normalize(&avg)?;
        let change = dist2(&next, &mean).sqrt();
        mean = next;
        if change < GPA_TOL {
            converged = true;
            break;
        }
    }
    let q = canonical_frame(&mean);
    let mean_shape = rotate(&mean, &q);
    let procrustes_coords = shapes.iter().map(|s| rotate(s, &q).into_iter().flatten().collect()).collect();
    Ok(GpaResult {
        mean_shape,
        procrustes_coords,
        centroid_sizes: sizes,
        loadings: Vec::new(),
        scores: Vec::new(),
        explained_variance: Vec::new(),
        iterations,
        converged,
    })
}

/// Top-`p` principal components of the Procrustes coordinates. Each
/// component is signed so its largest-magnitude loading is positive.
pub fn pca(g: &GpaResult, p: usize) -> Result<GpaResult> {
    let k = g.procrustes_coords.len();
    let n = g.procrustes_coords.first().map_or(0, Vec::len);
    if p == 0 || k < 2 || p > (k - 1).min(n) {
        return Err(Error::OutOfRange(format!(
            "component count {p} must be in 1..={}",
            k.saturating_sub(1).min(n)
        )));
    }
    let mut x = DMatrix::from_fn(k, n, |i, j| g.procrustes_coords[i][j]);
    for j in 0..n {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    // eigen-decomposition of the covariance; nalgebra's SVD with singular
    // vectors loses accuracy on nearly rank-deficient wide matrices
    let cov = x.transpose() * &x / (k - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut loadings = vec![vec![0.0; p]; n];
    let mut explained = Vec::with_capacity(p);
    for (c, &o) in order.iter().take(p).enumerate() {
        let col = eig.eigenvectors.column(o);
        let imax = (0..n).fold(0, |b, j| if col[j].abs() > col[b].abs() { j } else { b });
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            loadings[j][c] = sign * col[j];
        }
        explained.push(eig.eigenvalues[o].max(0.0));
    }
    let scores = (0..k)
        .map(|i| (0..p).map(|c| (0..n).map(|j| x[(i, j)] * loadings[j][c]).sum()).collect())
        .collect();
    Ok(GpaResult {
        loadings,
        scores,
        explained_variance: explained,
        ..g.clone()
    })
}

/// Total variance of the Procrustes coordinates (trace of the covariance).
pub fn total_variance(g: &GpaResult) -> f64 {
    let k = g.procrustes_coords.len();
    if k < 2 {
        return 0.0;
    }
    let n = g.procrustes_coords[0].len();
    (0..n)
        .map(|j| {
            let m = g.procrustes_coords.iter().map(|r| r[j]).sum::<f64>() / k as f64;
            g.procrustes_coords.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (k - 1) as f64
        })
        .sum()
}

/// First `k` principal-component scores of every subject.
pub fn select_gpa_biomarkers(g: &GpaResult, k: usize) -> Result<Vec<Vec<f64>>> {
    let p = g.explained_variance.len();
    if k == 0 || k > p {
        return Err(Error::OutOfRange(format!("biomarker count {k} must be in 1..={p}")));
    }
    Ok(g.scores.iter().map(|r| r[..k].to_vec()).collect())
}
