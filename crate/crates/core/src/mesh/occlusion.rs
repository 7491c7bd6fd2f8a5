use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bvh::Bvh;
use super::trimesh::{add, scale, TriMesh, Vec3};
use crate::{Error, Outcome, Result};

pub const DEFAULT_RAYS: usize = 64;
/// Ray origin offset along the normal, as a fraction of the bbox diagonal.
pub const RAY_OFFSET: f64 = 1e-4;

/// Orthonormal tangent frame around a unit normal (Duff et al. 2017).
fn tangent_frame(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1f64.copysign(n[2]);
    let a = -1.0 / (sign + n[2]);
    let b = n[0] * n[1] * a;
    (
        [1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0]],
        [b, sign + n[1] * n[1] * a, -n[1]],
    )
}

/// Cosine-weighted directions over the hemisphere around `normal`, drawn
/// from the stream of vertex `vertex` under `seed`.
pub fn hemisphere_directions(normal: Vec3, rays: usize, seed: u64, vertex: usize) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vertex as u64);
    let (t, b) = tangent_frame(normal);
    (0..rays)
        .map(|_| {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let r = u1.sqrt();
            let phi = 2.0 * std::f64::consts::PI * u2;
            let (x, y, z) = (r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt());
            add(add(scale(t, x), scale(b, y)), scale(normal, z))
        })
        .collect()
}

/// Per-vertex fraction of hemisphere rays that escape the mesh within one
/// bounding-box diagonal. Vertices without a defined normal get quality 0.
pub fn ambient_occlusion(mesh: &TriMesh, rays: usize, seed: u64) -> Result<Outcome<TriMesh>> {
    if rays == 0 {
        return Err(Error::NoSamples);
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let bvh = Bvh::new(mesh);
    let normals = mesh.vertex_normals();
    let diag = mesh.bbox_diagonal();
    let eps = RAY_OFFSET * diag;
    let quality: Vec<f64> = (0..mesh.vertices.len())
        .into_par_iter()
        .map(|v| {
            let n = normals[v];
            if n == [0.0; 3] {
                return 0.0;
            }
            let o = add(mesh.vertices[v], scale(n, eps));
            let escaped = hemisphere_directions(n, rays, seed, v)
                .into_iter()
                .filter(|&d| !bvh.occluded(o, d, diag))
                .count();
            escaped as f64 / rays as f64
        })
        .collect();
    let undefined = normals.iter().filter(|n| **n == [0.0; 3]).count();
    let mut out = mesh.clone();
    out.quality = Some(quality);
    Ok(if undefined > 0 {
        Outcome::warn(out, format!("{undefined} vertices have no normal; quality set to 0"))
    } else {
        Outcome::ok(out)
    })
}

/// Remove vertices whose quality lies in [qmin, qmax].
pub fn empty_interior(mesh: &TriMesh, qmin: f64, qmax: f64) -> Result<Outcome<TriMesh>> {
    let q = mesh.quality.as_ref().ok_or(Error::MissingQuality)?;
    let keep: Vec<bool> = q.iter().map(|&x| !(qmin..=qmax).contains(&x)).collect();
    let out = mesh.retain_vertices(&keep);
    Ok(if out.is_empty() && !mesh.is_empty() {
        Outcome::warn(out, "every vertex fell in the removal quality band; mesh is empty")
    } else {
        Outcome::ok(out)
    })
}
