//! Bounding-volume hierarchy over mesh triangles for ray and closest-point
//! queries.

use super::trimesh::{add, cross, dot, scale, sub, TriMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow(&mut self, p: Vec3) {
        for d in 0..3 {
            self.lo[d] = self.lo[d].min(p[d]);
            self.hi[d] = self.hi[d].max(p[d]);
        }
    }

    fn union(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    /// Slab test; entry distance if the ray meets the box within [0, tmax].
    #[inline]
    fn ray_entry(&self, o: Vec3, inv: Vec3, tmax: f64) -> Option<f64> {
        let (mut t0, mut t1) = (0.0f64, tmax);
        for d in 0..3 {
            let a = (self.lo[d] - o[d]) * inv[d];
            let b = (self.hi[d] - o[d]) * inv[d];
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            // NaN (0 * inf) leaves the bound unchanged
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    fn dist2(&self, p: Vec3) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            let e = (self.lo[d] - p[d]).max(0.0).max(p[d] - self.hi[d]);
            s += e * e;
        }
        s
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: range into `order`. Inner: `start` is the left child, the right
    /// child follows its whole subtree at `count`.
    start: u32,
    count: u32,
    leaf: bool,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.triangle(t)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| scale(add(add(t[0], t[1]), t[2]), 1.0 / 3.0)).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        if !tris.is_empty() {
            build(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        }
        Self { tris, order, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// True when the ray `o + t d` hits a triangle for some t in (0, tmax).
    pub fn occluded(&self, o: Vec3, d: Vec3, tmax: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = d.map(|c| 1.0 / c);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.ray_entry(o, inv, tmax).is_none() {
                continue;
            }
            if node.leaf {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(h) = ray_triangle(o, d, &self.tris[t as usize]) {
                        if h < tmax {
                            return true;
                        }
                    }
                }
            } else {
                let idx = stack[sp] as usize;
                stack[sp] = (idx + 1) as u32;
                stack[sp + 1] = node.count;
                sp += 2;
            }
        }
        false
    }

    /// Closest surface point to `p`, its squared distance and triangle index.
    pub fn closest_point(&self, p: Vec3) -> Option<(Vec3, f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: (Vec3, f64, usize) = ([0.0; 3], f64::INFINITY, 0);
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bounds.dist2(p) >= best.1 {
                continue;
            }
            if node.leaf {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let q = closest_on_triangle(p, &self.tris[t as usize]);
                    let e = sub(q, p);
                    let d2 = dot(e, e);
                    if d2 < best.1 {
                        best = (q, d2, t as usize);
                    }
                }
            } else {
                let (l, r) = (n + 1, node.count);
                let (dl, dr) = (self.nodes[l as usize].bounds.dist2(p), self.nodes[r as usize].bounds.dist2(p));
                // visit the nearer child first
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }
}

fn build(tris: &[[Vec3; 3]], cent: &[Vec3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let mut bounds = Aabb::empty();
    let mut cb = Aabb::empty();
    for &t in &order[start..end] {
        for p in tris[t as usize] {
            bounds.grow(p);
        }
        cb.grow(cent[t as usize]);
    }
    let me = nodes.len() as u32;
    nodes.push(Node {
        bounds,
        start: start as u32,
        count: (end - start) as u32,
        leaf: true,
    });
    if end - start <= LEAF_SIZE {
        return me;
    }
    let ext = sub(cb.hi, cb.lo);
    let axis = if ext[0] >= ext[1] && ext[0] >= ext[2] {
        0
    } else if ext[1] >= ext[2] {
        1
    } else {
        2
    };
    if ext[axis] <= 0.0 {
        return me;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        cent[a as usize][axis].total_cmp(&cent[b as usize][axis]).then(a.cmp(&b))
    });
    let left = build(tris, cent, order, start, mid, nodes);
    debug_assert_eq!(left, me + 1);
    let right = build(tris, cent, order, mid, end, nodes);
    let mut b = nodes[left as usize].bounds;
    b.union(&nodes[right as usize].bounds);
    nodes[me as usize] = Node {
        bounds: b,
        start: left,
        count: right,
        leaf: false,
    };
    me
}

/// Möller–Trumbore; hit distance for t > 0, both triangle sides.
#[inline]
pub fn ray_triangle(o: Vec3, d: Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-300 {
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

/// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_on_triangle(p: Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *tri;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return add(a, scale(ab, d1 / (d1 - d3)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return add(a, scale(ac, d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return add(b, scale(sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6))));
    }
    let denom = 1.0 / (va + vb + vc);
    add(a, add(scale(ab, vb * denom), scale(ac, vc * denom)))
}
