//! Brute-force reference implementations for the test suites.
//!
//! Nothing here depends on `mrface-core`; every oracle works on plain arrays
//! and favours obviousness over speed.

use std::collections::{HashMap, VecDeque};

pub type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dist2(a: P3, b: P3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Every level crossing of a grid, found by visiting each cell and each of
/// its 12 edges independently. Inside is `value >= th`. Points shared by
/// neighbouring cells are reported once.
pub fn marching_cubes_vertices(dims: [usize; 3], spacing: P3, data: &[f64], th: f64) -> Vec<P3> {
    const CORNER: [[usize; 3]; 8] = [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ];
    const EDGE: [[usize; 2]; 12] = [
        [0, 1],
        [1, 2],
        [3, 2],
        [0, 3],
        [4, 5],
        [5, 6],
        [7, 6],
        [4, 7],
        [0, 4],
        [1, 5],
        [2, 6],
        [3, 7],
    ];
    let at = |p: [usize; 3]| data[p[0] + dims[0] * (p[1] + dims[1] * p[2])];
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for k in 0..dims[2].saturating_sub(1) {
        for j in 0..dims[1].saturating_sub(1) {
            for i in 0..dims[0].saturating_sub(1) {
                for [ea, eb] in EDGE {
                    let pa = [i + CORNER[ea][0], j + CORNER[ea][1], k + CORNER[ea][2]];
                    let pb = [i + CORNER[eb][0], j + CORNER[eb][1], k + CORNER[eb][2]];
                    let (va, vb) = (at(pa), at(pb));
                    if (va >= th) == (vb >= th) {
                        continue;
                    }
                    if seen.insert((pa, pb), ()).is_some() {
                        continue;
                    }
                    let t = (th - va) / (vb - va);
                    out.push([0, 1, 2].map(|d| (pa[d] as f64 + t * (pb[d] as f64 - pa[d] as f64)) * spacing[d]));
                }
            }
        }
    }
    out
}

/// Largest distance from a point of `a` to its nearest point of `b`.
fn directed_hausdorff(a: &[P3], b: &[P3]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    // uniform bucket grid over b, searched in growing shells
    let mut lo = b[0];
    let mut hi = b[0];
    for p in b {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max).max(1e-9);
    let cell = extent / (b.len() as f64).cbrt().max(1.0);
    let key = |p: P3| [0, 1, 2].map(|d| ((p[d] - lo[d]) / cell).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in b.iter().enumerate() {
        buckets.entry(key(*p)).or_default().push(i);
    }
    let max_ring = (extent / cell).ceil() as i64 + 2;
    let mut worst: f64 = 0.0;
    for &p in a {
        let c = key(p);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring + c.iter().map(|v| v.abs()).max().unwrap_or(0) {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ix) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in ix {
                                best = best.min(dist2(p, b[i]));
                            }
                        }
                    }
                }
            }
            // every unvisited bucket is at least `ring * cell` away
            if best.is_finite() && best.sqrt() <= ring as f64 * cell {
                break;
            }
        }
        worst = worst.max(best.sqrt());
    }
    worst
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[P3], b: &[P3]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Möller-Trumbore ray/triangle intersection distance, `t > 0` only.
pub fn ray_triangle(o: P3, d: P3, tri: [P3; 3]) -> Option<f64> {
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(o, tri[0]);
    let u = dot(s, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(s, e1);
    let v = dot(d, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, q) * inv;
    (t > 0.0).then_some(t)
}

/// Escaping fraction per ray bundle: `rays[v]` holds (origin, direction)
/// pairs for vertex `v`; a ray escapes when no triangle is hit within `tmax`.
pub fn brute_ambient_occlusion(vertices: &[P3], triangles: &[[u32; 3]], rays: &[Vec<(P3, P3)>], tmax: f64) -> Vec<f64> {
    let tris: Vec<[P3; 3]> = triangles
        .iter()
        .map(|t| t.map(|i| vertices[i as usize]))
        .collect();
    rays.iter()
        .map(|bundle| {
            if bundle.is_empty() {
                return 0.0;
            }
            let escaped = bundle
                .iter()
                .filter(|(o, d)| !tris.iter().any(|&t| ray_triangle(*o, *d, t).is_some_and(|h| h <= tmax)))
                .count();
            escaped as f64 / bundle.len() as f64
        })
        .collect()
}

/// Connected components of a triangle mesh by union-find over triangle
/// edges. Returns per-vertex labels numbered in order of first vertex.
pub fn mesh_components(n_vertices: usize, triangles: &[[u32; 3]]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n_vertices).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2])] {
            let ra = find(&mut parent, a as usize);
            let rb = find(&mut parent, b as usize);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut ids = HashMap::new();
    let labels = (0..n_vertices)
        .map(|v| {
            let r = find(&mut parent, v);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect();
    (labels, ids.len())
}

/// Hole filling by 6-connected flood fill of the background from the grid
/// boundary: everything the flood does not reach is foreground.
pub fn flood_fill_holes(dims: [usize; 3], bits: &[bool]) -> Vec<bool> {
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut reached = vec![false; bits.len()];
    let mut queue = VecDeque::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let border = x == 0 || y == 0 || z == 0 || x + 1 == dims[0] || y + 1 == dims[1] || z + 1 == dims[2];
                let i = idx(x, y, z);
                if border && !bits[i] {
                    reached[i] = true;
                    queue.push_back((x, y, z));
                }
            }
        }
    }
    while let Some((x, y, z)) = queue.pop_front() {
        let mut visit = |x: usize, y: usize, z: usize| {
            let i = idx(x, y, z);
            if !bits[i] && !reached[i] {
                reached[i] = true;
                queue.push_back((x, y, z));
            }
        };
        if x > 0 {
            visit(x - 1, y, z);
        }
        if y > 0 {
            visit(x, y - 1, z);
        }
        if z > 0 {
            visit(x, y, z - 1);
        }
        if x + 1 < dims[0] {
            visit(x + 1, y, z);
        }
        if y + 1 < dims[1] {
            visit(x, y + 1, z);
        }
        if z + 1 < dims[2] {
            visit(x, y, z + 1);
        }
    }
    reached.iter().map(|r| !r).collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues are
/// returned in decreasing order with eigenvectors as the matching columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Rotation matrix for intrinsic z-y-x Euler angles in degrees.
pub fn euler_zyx(deg: P3) -> [[f64; 3]; 3] {
    let [a, b, c] = deg.map(f64::to_radians);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

fn normalize(x: &[P3]) -> Vec<P3> {
    let n = x.len() as f64;
    let c = [0, 1, 2].map(|d| x.iter().map(|p| p[d]).sum::<f64>() / n);
    let centred: Vec<P3> = x.iter().map(|p| sub(*p, c)).collect();
    let size = centred.iter().map(|p| dot(*p, *p)).sum::<f64>().sqrt();
    centred.iter().map(|p| p.map(|v| v / size)).collect()
}

/// Procrustes distance by exhaustive rotation search: both configurations
/// are centred and scaled to unit centroid size, then the rotation of `b`
/// is found on a global 15 degree Euler grid refined down to 0.1 degrees.
pub fn grid_procrustes_distance(a: &[P3], b: &[P3]) -> f64 {
    let a = normalize(a);
    let b = normalize(b);
    let cost = |deg: P3| {
        let r = euler_zyx(deg);
        a.iter()
            .zip(&b)
            .map(|(p, q)| {
                let rq = [0, 1, 2].map(|i| dot(r[i], *q));
                dist2(*p, rq)
            })
            .sum::<f64>()
    };
    let mut candidates: Vec<(f64, P3)> = Vec::new();
    let coarse = 15.0;
    for i in 0..24 {
        for j in 0..=12 {
            for k in 0..24 {
                let deg = [i as f64 * coarse - 180.0, j as f64 * coarse - 90.0, k as f64 * coarse - 180.0];
                candidates.push((cost(deg), deg));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = (f64::INFINITY, [0.0; 3]);
    for &(c0, start) in candidates.iter().take(8) {
        let mut cur = (c0, start);
        let mut step = coarse;
        for next in [3.0, 0.6, 0.1] {
            let span = (step / next).ceil() as i32;
            let centre = cur.1;
            for di in -span..=span {
                for dj in -span..=span {
                    for dk in -span..=span {
                        let deg = [
                            centre[0] + di as f64 * next,
                            centre[1] + dj as f64 * next,
                            centre[2] + dk as f64 * next,
                        ];
                        let c = cost(deg);
                        if c < cur.0 {
                            cur = (c, deg);
                        }
                    }
                }
            }
            step = next;
        }
        if cur.0 < best.0 {
            best = cur;
        }
    }
    best.0.sqrt()
}

/// Solve the normal equations of `y ~ X w` by Gaussian elimination with
/// partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Sample quantile by linear interpolation between order statistics
/// (`q` in [0, 1]).
pub fn quantile_linear(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}
