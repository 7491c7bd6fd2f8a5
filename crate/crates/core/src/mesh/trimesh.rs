use std::collections::HashMap;

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Indexed triangle mesh, coordinates in millimetres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex quality in [0, 1].
    pub quality: Option<Vec<f64>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let m = Self {
            vertices,
            triangles,
            quality: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u64;
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i as u64 >= n) {
                return Err(Error::InvalidArgument(format!("triangle {k} indexes past {n} vertices")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidArgument(format!("triangle {k} repeats a vertex")));
            }
        }
        if let Some(q) = &self.quality {
            if q.len() != self.vertices.len() {
                return Err(Error::InvalidArgument("quality length differs from vertex count".into()));
            }
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn bbox(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(mut lo, mut hi), v| {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
            (lo, hi)
        }))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox().map(|(lo, hi)| norm(sub(hi, lo))).unwrap_or(0.0)
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized triangle normal (twice the area vector).
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * norm(self.face_normal(t))).sum()
    }

    /// Signed enclosed volume; positive for closed meshes with outward normals.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Area-weighted vertex normals; zero where the umbrella has no area.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![[0.0; 3]; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let f = self.face_normal(t);
            for &i in tri {
                n[i as usize] = add(n[i as usize], f);
            }
        }
        for v in &mut n {
            let l = norm(*v);
            *v = if l > 0.0 { scale(*v, 1.0 / l) } else { [0.0; 3] };
        }
        n
    }

    /// Undirected edges with the number of incident triangles.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Edges used by exactly one triangle, sorted.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<_> = self
            .edge_counts()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        e.sort_unstable();
        e
    }

    /// V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Keep the vertices flagged in `keep`, dropping triangles that touch a
    /// removed vertex, and reindex compactly preserving order.
    pub fn retain_vertices(&self, keep: &[bool]) -> TriMesh {
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut quality = self.quality.as_ref().map(|_| Vec::new());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = vertices.len() as u32;
                vertices.push(self.vertices[i]);
                if let (Some(q), Some(src)) = (quality.as_mut(), self.quality.as_ref()) {
                    q.push(src[i]);
                }
            }
        }
        let triangles = self
            .triangles
            .iter()
            .filter(|t| t.iter().all(|&i| keep[i as usize]))
            .map(|t| [map[t[0] as usize], map[t[1] as usize], map[t[2] as usize]])
            .collect();
        TriMesh {
            vertices,
            triangles,
            quality,
        }
    }

    /// Drop vertices not referenced by any triangle.
    pub fn remove_unreferenced(&self) -> TriMesh {
        let mut keep = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                keep[i as usize] = true;
            }
        }
        self.retain_vertices(&keep)
    }

    /// Disjoint union; indices of `other` are shifted.
    pub fn merge(&self, other: &TriMesh) -> TriMesh {
        let off = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        let quality = match (&self.quality, &other.quality) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        TriMesh {
            vertices,
            triangles,
            quality,
        }
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
            quality: self.quality.clone(),
        }
    }

    /// Vertex adjacency lists, sorted and deduplicated.
    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// UV sphere, useful for tests and phantoms.
pub fn uv_sphere(center: Vec3, r: f64, stacks: usize, slices: usize) -> TriMesh {
    let mut vertices = vec![[center[0], center[1], center[2] + r]];
    for i in 1..stacks {
        let phi = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let th = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            vertices.push([
                center[0] + r * phi.sin() * th.cos(),
                center[1] + r * phi.sin() * th.sin(),
                center[2] + r * phi.cos(),
            ]);
        }
    }
    vertices.push([center[0], center[1], center[2] - r]);
    let south = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..slices {
        triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    TriMesh {
        vertices,
        triangles,
        quality: None,
    }
}

/// Axis-aligned box with outward-facing triangles.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> TriMesh {
    let v = |x: usize, y: usize, z: usize| {
        [
            if x == 0 { lo[0] } else { hi[0] },
            if y == 0 { lo[1] } else { hi[1] },
            if z == 0 { lo[2] } else { hi[2] },
        ]
    };
    let vertices = (0..8).map(|i| v(i & 1, (i >> 1) & 1, (i >> 2) & 1)).collect();
    // corner index = x + 2y + 4z
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh {
        vertices,
        triangles,
        quality: None,
    }
}
