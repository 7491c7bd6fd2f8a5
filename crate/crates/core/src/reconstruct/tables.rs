//! Marching-cubes case table, derived from the cube's face topology instead
//! of typed in.
//!
//! Corner `c` has offset `CORNERS[c]`; edge `e` joins `EDGES[e]`. A corner is
//! inside when its value is >= the threshold. On every face, inside corners
//! that are not adjacent along the face boundary are kept apart (no
//! asymptotic decider), so neighbouring cells agree on shared faces.
//! Triangles wind so their normals point from inside (high) to outside (low).

use std::sync::OnceLock;

pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Endpoints of each edge, lower grid coordinate first.
pub const EDGES: [[usize; 2]; 12] = [
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

/// Faces as corner loops, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 4, 7, 3],
    [1, 2, 6, 5],
];

pub const MAX_TRIANGLES: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub count: u8,
    pub triangles: [[u8; 3]; MAX_TRIANGLES],
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("corners share an edge")
}

fn build_case(case: usize) -> Case {
    let inside = |c: usize| case & (1 << c) != 0;
    // next[e]: the polygon edge that follows e around its boundary loop
    let mut next = [usize::MAX; 12];
    for face in FACES {
        let crossings: Vec<usize> = (0..4).filter(|&p| inside(face[p]) != inside(face[(p + 1) % 4])).collect();
        for (k, &p) in crossings.iter().enumerate() {
            if !inside(face[p]) && inside(face[(p + 1) % 4]) {
                let q = crossings[(k + 1) % crossings.len()];
                let from = edge_between(face[p], face[(p + 1) % 4]);
                let to = edge_between(face[q], face[(q + 1) % 4]);
                next[from] = to;
            }
        }
    }
    let mut out = Case {
        count: 0,
        triangles: [[0; 3]; MAX_TRIANGLES],
    };
    let mut seen = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            ring.push(e as u8);
            e = next[e];
        }
        for k in 1..ring.len() - 1 {
            out.triangles[out.count as usize] = [ring[0], ring[k], ring[k + 1]];
            out.count += 1;
        }
    }
    out
}

pub fn case_table() -> &'static [Case; 256] {
    static TABLE: OnceLock<[Case; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(build_case))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases_are_empty() {
        assert_eq!(case_table()[0].count, 0);
        assert_eq!(case_table()[255].count, 0);
    }

    #[test]
    fn single_corner_is_one_triangle() {
        for c in 0..8 {
            assert_eq!(case_table()[1 << c].count, 1);
            assert_eq!(case_table()[255 ^ (1 << c)].count, 1);
        }
    }

    #[test]
    fn every_crossing_edge_is_used_and_nothing_else() {
        for (case, entry) in case_table().iter().enumerate() {
            let mut used = [false; 12];
            for t in &entry.triangles[..entry.count as usize] {
                for &e in t {
                    used[e as usize] = true;
                }
            }
            for (e, [a, b]) in EDGES.iter().enumerate() {
                let crosses = ((case >> a) & 1) != ((case >> b) & 1);
                assert_eq!(used[e], crosses, "case {case} edge {e}");
            }
        }
    }

    #[test]
    fn normal_points_away_from_inside_corner() {
        let mid = |e: u8| {
            let [a, b] = EDGES[e as usize];
            let (p, q) = (CORNERS[a], CORNERS[b]);
            [0, 1, 2].map(|d| (p[d] + q[d]) as f64 / 2.0)
        };
        for c in 0..8 {
            let t = case_table()[1 << c].triangles[0];
            let (a, b, d) = (mid(t[0]), mid(t[1]), mid(t[2]));
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let corner = CORNERS[c].map(|x| x as f64);
            let away = [0, 1, 2].map(|k| a[k] - corner[k]);
            assert!(n[0] * away[0] + n[1] * away[1] + n[2] * away[2] > 0.0, "corner {c}");
        }
    }
}
