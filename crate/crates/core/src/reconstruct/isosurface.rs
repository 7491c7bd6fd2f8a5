//! Flying Edges isosurface extraction.
//!
//! Four passes over the grid:
//! 1. classify points and record, per x-row, the first and last x-edge
//!    crossing (trim bounds) and the row's end classes;
//! 2. count the y- and z-edge crossings owned by each row and the triangles
//!    of each row of cells, visiting only the trimmed span;
//! 3. prefix-sum the counts into output offsets;
//! 4. write vertices (per point row) and triangles (per cell row) into
//!    disjoint slices of preallocated buffers.
//!
//! Every x-row owns its x-edges, the y-edges to the next row and the z-edges
//! to the next slice. Output is identical whether or not rows are processed
//! in parallel: vertices are ordered by owning row (slice-major), then x-,
//! y-, z-edges by increasing x; triangles by cell row, then cell, then table
//! order.

use rayon::prelude::*;

use super::tables::case_table;
use crate::mesh::TriMesh;
use crate::volume::Volume;
use crate::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy)]
struct RowMeta {
    /// First crossing x-edge, or `nx - 1` when there is none.
    xl: usize,
    /// One past the last crossing x-edge, or 0 when there is none.
    xr: usize,
    left: bool,
    right: bool,
    x_count: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct RowCounts {
    x: usize,
    y: usize,
    z: usize,
}

fn map_rows<T: Send, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Parallelism::Parallel => (0..n).into_par_iter().map(f).collect(),
        Parallelism::Serial => (0..n).map(f).collect(),
    }
}

/// Split `buf` into consecutive mutable chunks of the given lengths.
fn split_chunks<'a, T>(mut buf: &'a mut [T], lens: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(lens.len());
    for &l in lens {
        let (head, tail) = std::mem::take(&mut buf).split_at_mut(l);
        out.push(head);
        buf = tail;
    }
    out
}

fn for_each_chunk<T: Send, F>(chunks: Vec<&mut [T]>, mode: Parallelism, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match mode {
        Parallelism::Parallel => chunks.into_par_iter().enumerate().for_each(|(r, c)| f(r, c)),
        Parallelism::Serial => chunks.into_iter().enumerate().for_each(|(r, c)| f(r, c)),
    }
}

struct Grid<'a> {
    nx: usize,
    ny: usize,
    data: &'a [f64],
    inside: Vec<bool>,
    th: f64,
    spacing: [f64; 3],
}

impl Grid<'_> {
    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    fn ins(&self, i: usize, j: usize, k: usize) -> bool {
        self.inside[self.idx(i, j, k)]
    }

    #[inline]
    fn row(&self, j: usize, k: usize) -> usize {
        j + self.ny * k
    }

    /// Inclusive point span that may hold crossings between two rows.
    fn pair_span(&self, a: &RowMeta, b: &RowMeta) -> Option<(usize, usize)> {
        let lo = if a.left != b.left { 0 } else { a.xl.min(b.xl) };
        let hi = if a.right != b.right { self.nx - 1 } else { a.xr.max(b.xr).min(self.nx - 1) };
        (lo <= hi).then_some((lo, hi))
    }

    /// Cell span [lo, hi) of the cell row whose lower corner row is (j, k).
    fn cell_span(&self, meta: &[RowMeta], j: usize, k: usize) -> (usize, usize) {
        let rows = [
            meta[self.row(j, k)],
            meta[self.row(j + 1, k)],
            meta[self.row(j, k + 1)],
            meta[self.row(j + 1, k + 1)],
        ];
        let same_left = rows.iter().all(|r| r.left == rows[0].left);
        let same_right = rows.iter().all(|r| r.right == rows[0].right);
        let lo = if same_left { rows.iter().map(|r| r.xl).min().unwrap() } else { 0 };
        let hi = if same_right { rows.iter().map(|r| r.xr).max().unwrap() } else { self.nx - 1 };
        (lo, hi.min(self.nx - 1))
    }

    #[inline]
    fn case_index(&self, i: usize, j: usize, k: usize) -> usize {
        let mut c = 0;
        for (bit, [di, dj, dk]) in super::tables::CORNERS.iter().enumerate() {
            if self.ins(i + di, j + dj, k + dk) {
                c |= 1 << bit;
            }
        }
        c
    }

    #[inline]
    fn interp(&self, a: usize, b: usize) -> f64 {
        let (va, vb) = (self.data[a], self.data[b]);
        (self.th - va) / (vb - va)
    }
}

/// Isosurface of `v` at `th` in millimetre coordinates (voxel index times
/// spacing). Inside is `value >= th`; normals face lower values.
pub fn extract_isosurface(v: &Volume, th: f64) -> Outcome<TriMesh> {
    extract_isosurface_with(v, th, Parallelism::Parallel)
}

pub fn extract_isosurface_with(v: &Volume, th: f64, mode: Parallelism) -> Outcome<TriMesh> {
    let (lo, hi) = v.min_max();
    if !th.is_finite() || !(lo < th && th < hi) {
        return Outcome::warn(
            TriMesh::default(),
            format!("threshold {th} outside data range ({lo}, {hi}); empty isosurface"),
        );
    }
    let [nx, ny, nz] = v.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Outcome::warn(TriMesh::default(), "volume has no cells; empty isosurface");
    }
    let mut g = Grid {
        nx,
        ny,
        data: &v.data,
        inside: vec![false; v.len()],
        th,
        spacing: v.spacing,
    };

    // pass 1
    let n_rows = ny * nz;
    let meta: Vec<RowMeta> = {
        let data = g.data;
        let chunks: Vec<&mut [bool]> = g.inside.chunks_mut(nx).collect();
        let classify = |r: usize, out: &mut [bool]| -> RowMeta {
            let row = &data[r * nx..(r + 1) * nx];
            for (o, &x) in out.iter_mut().zip(row) {
                *o = x >= th;
            }
            let mut m = RowMeta {
                xl: nx - 1,
                xr: 0,
                left: out[0],
                right: out[nx - 1],
                x_count: 0,
            };
            for i in 0..nx - 1 {
                if out[i] != out[i + 1] {
                    m.xl = m.xl.min(i);
                    m.xr = i + 1;
                    m.x_count += 1;
                }
            }
            m
        };
        match mode {
            Parallelism::Parallel => chunks.into_par_iter().enumerate().map(|(r, c)| classify(r, c)).collect(),
            Parallelism::Serial => chunks.into_iter().enumerate().map(|(r, c)| classify(r, c)).collect(),
        }
    };
    let g = g;

    // pass 2
    let counts: Vec<RowCounts> = map_rows(n_rows, mode, |r| {
        let (j, k) = (r % ny, r / ny);
        let mut c = RowCounts {
            x: meta[r].x_count,
            ..Default::default()
        };
        if j + 1 < ny {
            if let Some((a, b)) = g.pair_span(&meta[r], &meta[g.row(j + 1, k)]) {
                c.y = (a..=b).filter(|&i| g.ins(i, j, k) != g.ins(i, j + 1, k)).count();
            }
        }
        if k + 1 < nz {
            if let Some((a, b)) = g.pair_span(&meta[r], &meta[g.row(j, k + 1)]) {
                c.z = (a..=b).filter(|&i| g.ins(i, j, k) != g.ins(i, j, k + 1)).count();
            }
        }
        c
    });
    let table = case_table();
    let n_cell_rows = (ny - 1) * (nz - 1);
    let tri_counts: Vec<usize> = map_rows(n_cell_rows, mode, |c| {
        let (j, k) = (c % (ny - 1), c / (ny - 1));
        let (a, b) = g.cell_span(&meta, j, k);
        (a..b).map(|i| table[g.case_index(i, j, k)].count as usize).sum()
    });

    // pass 3
    let vert_lens: Vec<usize> = counts.iter().map(|c| c.x + c.y + c.z).collect();
    let mut vert_base = Vec::with_capacity(n_rows);
    let mut acc = 0usize;
    for l in &vert_lens {
        vert_base.push(acc);
        acc += l;
    }
    let n_verts = acc;
    let n_tris: usize = tri_counts.iter().sum();
    assert!(n_verts <= u32::MAX as usize, "isosurface exceeds u32 vertex indexing");

    // pass 4
    let mut vertices = vec![[0.0f64; 3]; n_verts];
    let [sx, sy, sz] = g.spacing;
    for_each_chunk(split_chunks(&mut vertices, &vert_lens), mode, |r, out| {
        let (j, k) = (r % ny, r / ny);
        let m = meta[r];
        let mut n = 0;
        for i in m.xl..m.xr {
            if g.ins(i, j, k) != g.ins(i + 1, j, k) {
                let p = g.idx(i, j, k);
                let t = g.interp(p, p + 1);
                out[n] = [(i as f64 + t) * sx, j as f64 * sy, k as f64 * sz];
                n += 1;
            }
        }
        if j + 1 < ny {
            if let Some((a, b)) = g.pair_span(&m, &meta[g.row(j + 1, k)]) {
                for i in a..=b {
                    if g.ins(i, j, k) != g.ins(i, j + 1, k) {
                        let t = g.interp(g.idx(i, j, k), g.idx(i, j + 1, k));
                        out[n] = [i as f64 * sx, (j as f64 + t) * sy, k as f64 * sz];
                        n += 1;
                    }
                }
            }
        }
        if k + 1 < nz {
            if let Some((a, b)) = g.pair_span(&m, &meta[g.row(j, k + 1)]) {
                for i in a..=b {
                    if g.ins(i, j, k) != g.ins(i, j, k + 1) {
                        let t = g.interp(g.idx(i, j, k), g.idx(i, j, k + 1));
                        out[n] = [i as f64 * sx, j as f64 * sy, (k as f64 + t) * sz];
                        n += 1;
                    }
                }
            }
        }
        debug_assert_eq!(n, out.len());
    });

    let mut triangles = vec![[0u32; 3]; n_tris];
    for_each_chunk(split_chunks(&mut triangles, &tri_counts), mode, |c, out| {
        let (j, k) = (c % (ny - 1), c / (ny - 1));
        let (a, b) = g.cell_span(&meta, j, k);
        if a >= b {
            return;
        }
        let r00 = g.row(j, k);
        let r10 = g.row(j + 1, k);
        let r01 = g.row(j, k + 1);
        let r11 = g.row(j + 1, k + 1);
        let xb = |r: usize| vert_base[r];
        let yb = |r: usize| vert_base[r] + counts[r].x;
        let zb = |r: usize| vert_base[r] + counts[r].x + counts[r].y;
        // running ids of the next crossing on each edge family this cell row touches
        let (mut x00, mut x10, mut x01, mut x11) = (xb(r00), xb(r10), xb(r01), xb(r11));
        let (mut y00, mut y01) = (yb(r00), yb(r01));
        let (mut z00, mut z10) = (zb(r00), zb(r10));
        let mut n = 0;
        for i in a..b {
            let ycross = |jj: usize, kk: usize, ii: usize| (g.ins(ii, jj, kk) != g.ins(ii, jj + 1, kk)) as usize;
            let zcross = |jj: usize, kk: usize, ii: usize| (g.ins(ii, jj, kk) != g.ins(ii, jj, kk + 1)) as usize;
            let xcross = |jj: usize, kk: usize| (g.ins(i, jj, kk) != g.ins(i + 1, jj, kk)) as usize;
            let case = &table[g.case_index(i, j, k)];
            if case.count > 0 {
                let ids = [
                    x00,
                    y00 + ycross(j, k, i),
                    x10,
                    y00,
                    x01,
                    y01 + ycross(j, k + 1, i),
                    x11,
                    y01,
                    z00,
                    z00 + zcross(j, k, i),
                    z10 + zcross(j + 1, k, i),
                    z10,
                ];
                for t in &case.triangles[..case.count as usize] {
                    out[n] = [ids[t[0] as usize] as u32, ids[t[1] as usize] as u32, ids[t[2] as usize] as u32];
                    n += 1;
                }
            }
            x00 += xcross(j, k);
            x10 += xcross(j + 1, k);
            x01 += xcross(j, k + 1);
            x11 += xcross(j + 1, k + 1);
            y00 += ycross(j, k, i);
            y01 += ycross(j, k + 1, i);
            z00 += zcross(j, k, i);
            z10 += zcross(j + 1, k, i);
        }
        debug_assert_eq!(n, out.len());
    });

    Outcome::ok(TriMesh {
        vertices,
        triangles,
        quality: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_volume(n: usize, r: f64) -> Volume {
        let c = (n as f64 - 1.0) / 2.0;
        Volume::from_fn([n, n, n], [1.0; 3], |x, y, z| {
            r - ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt()
        })
        .unwrap()
    }

    #[test]
    fn all_below_is_empty_with_warning() {
        let v = Volume::new([3, 3, 3], [1.0; 3], vec![1.0; 27]).unwrap();
        let out = extract_isosurface(&v, 5.0);
        assert!(out.value.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn sphere_is_closed_with_outward_normals() {
        let m = extract_isosurface(&sphere_volume(24, 8.0), 0.0).value;
        m.validate().unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.boundary_edges().is_empty());
        // inside is the high side, so normals face outward
        assert!(m.signed_volume() > 0.0);
        let want = 4.0 / 3.0 * std::f64::consts::PI * 512.0;
        assert!((m.signed_volume() - want).abs() / want < 0.05);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let v = sphere_volume(20, 6.3);
        let a = extract_isosurface_with(&v, 0.1, Parallelism::Serial).value;
        let b = extract_isosurface_with(&v, 0.1, Parallelism::Parallel).value;
        assert_eq!(a, b);
    }

    #[test]
    fn spacing_scales_vertices() {
        let v = sphere_volume(16, 5.0);
        let a = extract_isosurface(&v, 0.0).value;
        let mut w = v.clone();
        w.spacing = [2.0, 0.5, 3.0];
        let b = extract_isosurface(&w, 0.0).value;
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!((p[0] * 2.0 - q[0]).abs() < 1e-12);
            assert!((p[1] * 0.5 - q[1]).abs() < 1e-12);
            assert!((p[2] * 3.0 - q[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn slab_touching_boundary_is_open() {
        // inside region reaches the volume border, so the surface is a sheet
        let v = Volume::from_fn([6, 5, 4], [1.0; 3], |x, _, _| x as f64).unwrap();
        let m = extract_isosurface(&v, 2.5).value;
        assert_eq!(m.vertices.len(), 5 * 4);
        assert_eq!(m.triangles.len(), 2 * 4 * 3);
        assert!(m.vertices.iter().all(|p| (p[0] - 2.5).abs() < 1e-12));
        // normal points toward -x (lower values)
        assert!(m.face_normal(0)[0] < 0.0);
    }
}
