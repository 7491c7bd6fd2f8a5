//! Boundary-loop hole filling for face meshes.

use std::collections::BTreeMap;

use super::crop::{crop_face, CropSpec};
use super::smooth::laplacian_step;
use super::trimesh::{add, scale, sub, TriMesh, Vec3};
use crate::{Error, Result};

/// Loop vertices this close to a crop plane belong to the crop boundary, mm.
pub const CROP_PLANE_TOLERANCE: f64 = 1.0;
const FAIRING_ITERS: usize = 3;
/// Loop vertices per concentric ring of fill vertices.
const RING_EVERY: usize = 6;
const MAX_RINGS: usize = 8;

/// Boundary loops as vertex sequences, oriented opposite to the adjacent
/// triangles so a fan over a loop continues the surface orientation.
pub fn boundary_loops(mesh: &TriMesh) -> Result<Vec<Vec<u32>>> {
    let counts = mesh.edge_counts();
    let mut bad: Vec<_> = counts.iter().filter(|&(_, &c)| c > 2).map(|(&e, _)| e).collect();
    bad.sort_unstable();
    if let Some(&(a, b)) = bad.first() {
        return Err(Error::NonManifold(a, b));
    }
    // reversed boundary half-edges, keyed by start vertex
    let mut next: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if counts[&(a.min(b), a.max(b))] == 1 {
                next.entry(b).or_default().push(a);
            }
        }
    }
    for v in next.values_mut() {
        v.sort_unstable();
    }
    let mut loops = Vec::new();
    while let Some((&start, _)) = next.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut cur = start;
        loop {
            let outs = next.get_mut(&cur).expect("boundary vertex has an outgoing edge");
            if outs.is_empty() {
                break;
            }
            let n = outs.remove(0);
            if n == start {
                break;
            }
            ring.push(n);
            cur = n;
        }
        if ring.len() >= 3 {
            loops.push(ring);
        }
    }
    Ok(loops)
}

/// Close boundary loops that do not lie on the crop planes, fair the new
/// vertices, and re-apply the crop. Returns the mesh and the number of
/// loops that were filled.
pub fn fill_holes(mesh: &TriMesh, crop: &CropSpec) -> Result<(TriMesh, usize)> {
    crop.validate()?;
    let loops = boundary_loops(mesh)?;
    let mut out = mesh.clone();
    let mut movable = vec![false; mesh.vertices.len()];
    let mut filled = 0;
    for ring in loops {
        let on_crop = ring
            .iter()
            .all(|&v| crop.plane_distance(mesh.vertices[v as usize]) <= CROP_PLANE_TOLERANCE);
        if on_crop {
            continue;
        }
        filled += 1;
        fill_loop(&mut out, &mut movable, &ring);
    }
    if filled == 0 {
        return Ok((mesh.clone(), 0));
    }
    let adj = out.neighbors();
    for _ in 0..FAIRING_ITERS {
        laplacian_step(&mut out.vertices, &adj, 1.0, Some(&movable));
    }
    Ok((crop_face(&out, crop)?, filled))
}

/// Concentric rings shrinking toward the loop centroid, closed by a fan.
fn fill_loop(mesh: &mut TriMesh, movable: &mut Vec<bool>, ring: &[u32]) {
    let n = ring.len();
    let pts: Vec<Vec3> = ring.iter().map(|&v| mesh.vertices[v as usize]).collect();
    let centroid = scale(pts.iter().fold([0.0; 3], |a, &p| add(a, p)), 1.0 / n as f64);
    let rings = (n / RING_EVERY).min(MAX_RINGS);
    let mut push = |mesh: &mut TriMesh, p: Vec3| {
        mesh.vertices.push(p);
        if let Some(q) = mesh.quality.as_mut() {
            q.push(1.0);
        }
        movable.push(true);
        (mesh.vertices.len() - 1) as u32
    };
    let mut outer: Vec<u32> = ring.to_vec();
    for r in 1..=rings {
        let f = r as f64 / (rings + 1) as f64;
        let inner: Vec<u32> = pts
            .iter()
            .map(|&p| push(mesh, add(p, scale(sub(centroid, p), f))))
            .collect();
        for i in 0..n {
            let j = (i + 1) % n;
            mesh.triangles.push([outer[i], outer[j], inner[j]]);
            mesh.triangles.push([outer[i], inner[j], inner[i]]);
        }
        outer = inner;
    }
    let c = push(mesh, centroid);
    for i in 0..n {
        mesh.triangles.push([outer[i], outer[(i + 1) % n], c]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, uv_sphere};

    fn wide_crop() -> CropSpec {
        CropSpec::new(-1e3, -1e3, 1e3).unwrap()
    }

    #[test]
    fn watertight_is_unchanged() {
        let s = uv_sphere([0.0; 3], 5.0, 10, 12);
        let (out, n) = fill_holes(&s, &wide_crop()).unwrap();
        assert_eq!(n, 0);
        assert_eq!(out, s);
    }

    #[test]
    fn capped_sphere_is_closed_with_consistent_orientation() {
        let s = uv_sphere([0.0; 3], 10.0, 16, 24);
        let keep: Vec<bool> = s.vertices.iter().map(|v| v[2] < 8.0).collect();
        let open = s.retain_vertices(&keep);
        assert_eq!(boundary_loops(&open).unwrap().len(), 1);
        let (out, n) = fill_holes(&open, &wide_crop()).unwrap();
        assert_eq!(n, 1);
        assert!(out.boundary_edges().is_empty());
        assert_eq!(out.euler_characteristic(), 2);
        // every directed edge appears once when orientation is consistent
        let mut directed = std::collections::HashSet::new();
        for t in &out.triangles {
            for k in 0..3 {
                assert!(directed.insert((t[k], t[(k + 1) % 3])));
            }
        }
        assert!(out.signed_volume() > 0.0);
    }

    #[test]
    fn crop_boundary_is_exempt() {
        let s = uv_sphere([0.0; 3], 10.0, 16, 24);
        let crop = CropSpec::new(0.0, -1e3, 1e3).unwrap();
        // cut exactly at a ring of vertices so the boundary lies on y = 0
        let rot = s.map_vertices(|v| [v[0], v[2], v[1]]);
        let cut = crop_face(&rot, &crop).unwrap();
        let (out, n) = fill_holes(&cut, &crop).unwrap();
        assert_eq!(n, 0);
        assert_eq!(out, cut);
    }

    #[test]
    fn non_manifold_edge_errors() {
        let mut b = box_mesh([0.0; 3], [1.0; 3]);
        let extra = b.vertices.len() as u32;
        b.vertices.push([0.5, -1.0, 0.5]);
        b.triangles.push([0, 1, extra]);
        assert!(matches!(fill_holes(&b, &wide_crop()), Err(Error::NonManifold(..))));
    }
}
