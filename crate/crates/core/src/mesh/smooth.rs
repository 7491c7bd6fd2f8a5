use super::trimesh::{TriMesh, Vec3};
use crate::{Error, Result};

pub const TAUBIN_LAMBDA: f64 = 0.5;
pub const TAUBIN_MU: f64 = -0.53;
pub const TAUBIN_ITERS: usize = 10;

/// One uniform-Laplacian step `v += f * (mean(neighbours) - v)` applied to
/// the vertices flagged in `movable` (all when `None`).
pub(crate) fn laplacian_step(vertices: &mut [Vec3], adj: &[Vec<u32>], f: f64, movable: Option<&[bool]>) {
    let prev = vertices.to_vec();
    for (v, nb) in adj.iter().enumerate() {
        if nb.is_empty() || movable.is_some_and(|m| !m[v]) {
            continue;
        }
        let mut c = [0.0; 3];
        for &u in nb {
            for d in 0..3 {
                c[d] += prev[u as usize][d];
            }
        }
        let k = nb.len() as f64;
        for d in 0..3 {
            vertices[v][d] = prev[v][d] + f * (c[d] / k - prev[v][d]);
        }
    }
}

/// Taubin lambda|mu smoothing: alternating shrink and inflate steps.
pub fn taubin_smooth(mesh: &TriMesh, lambda: f64, mu: f64, iters: usize) -> Result<TriMesh> {
    if !(lambda > 0.0 && mu < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Taubin smoothing needs lambda > 0 > mu (got {lambda}, {mu})"
        )));
    }
    let adj = mesh.neighbors();
    let mut out = mesh.clone();
    for _ in 0..iters {
        laplacian_step(&mut out.vertices, &adj, lambda, None);
        laplacian_step(&mut out.vertices, &adj, mu, None);
    }
    Ok(out)
}

/// Plain Laplacian smoothing, `iters` steps of factor `lambda`.
pub fn laplacian_smooth(mesh: &TriMesh, lambda: f64, iters: usize) -> TriMesh {
    let adj = mesh.neighbors();
    let mut out = mesh.clone();
    for _ in 0..iters {
        laplacian_step(&mut out.vertices, &adj, lambda, None);
    }
    out
}
