//! Foreground mask: Otsu threshold, binary closing, hole filling.

use rayon::prelude::*;

use crate::volume::Volume;
use crate::{Error, Result};

pub const CLOSING_RADIUS: usize = 2;
const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub dims: [usize; 3],
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::InvalidArgument(format!(
                "mask has {} bits for dims {:?}",
                bits.len(),
                dims
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self { dims, bits }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.index(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// True when every voxel set in `other` is also set in `self`.
    pub fn contains(&self, other: &BinaryMask) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }

    /// Inclusive voxel bounding box of the set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if self.get(x, y, z) {
                        any = true;
                        for (d, c) in [x, y, z].into_iter().enumerate() {
                            lo[d] = lo[d].min(c);
                            hi[d] = hi[d].max(c);
                        }
                    }
                }
            }
        }
        any.then_some((lo, hi))
    }
}

/// Otsu threshold over a 256-bin histogram. Voxels strictly above the
/// returned value are foreground.
pub fn otsu_threshold(v: &Volume) -> f64 {
    let (lo, hi) = v.min_max();
    if !(hi > lo) {
        return hi;
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0u64; OTSU_BINS];
    for &x in &v.data {
        hist[(((x - lo) / width) as usize).min(OTSU_BINS - 1)] += 1;
    }
    let total = v.len() as f64;
    let center = |k: usize| lo + width * (k as f64 + 0.5);
    let sum_all: f64 = hist.iter().enumerate().map(|(k, &c)| c as f64 * center(k)).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for k in 0..OTSU_BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += hist[k] as f64 * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    lo + width * (best_k + 1) as f64
}

pub fn threshold_mask(v: &Volume, t: f64) -> BinaryMask {
    BinaryMask {
        dims: v.dims,
        bits: v.data.iter().map(|&x| x > t).collect(),
    }
}

fn ball_offsets(r: usize) -> Vec<[isize; 3]> {
    let r = r as isize;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Out-of-bounds neighbours count as background.
fn morph(m: &BinaryMask, r: usize, dilate: bool) -> BinaryMask {
    let offsets = ball_offsets(r);
    let [nx, ny, nz] = m.dims;
    let slice = nx * ny;
    let mut bits = vec![false; m.bits.len()];
    bits.par_chunks_mut(slice.max(1)).enumerate().for_each(|(z, out)| {
        for y in 0..ny {
            for x in 0..nx {
                let mut hit = !dilate;
                for o in &offsets {
                    let (xx, yy, zz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                    let inb = xx >= 0
                        && yy >= 0
                        && zz >= 0
                        && (xx as usize) < nx
                        && (yy as usize) < ny
                        && (zz as usize) < nz;
                    let val = inb && m.get(xx as usize, yy as usize, zz as usize);
                    if dilate && val {
                        hit = true;
                        break;
                    }
                    if !dilate && !val {
                        hit = false;
                        break;
                    }
                }
                out[x + nx * y] = hit;
            }
        }
    });
    BinaryMask { dims: m.dims, bits }
}

pub fn dilate(m: &BinaryMask, r: usize) -> BinaryMask {
    morph(m, r, true)
}

pub fn erode(m: &BinaryMask, r: usize) -> BinaryMask {
    morph(m, r, false)
}

/// Closing against an unbounded background: the mask is padded by `r`
/// so that objects near the border are not fused with it.
pub fn close(m: &BinaryMask, r: usize) -> BinaryMask {
    let [nx, ny, nz] = m.dims;
    let pd = [nx + 2 * r, ny + 2 * r, nz + 2 * r];
    let padded = BinaryMask::from_fn(pd, |x, y, z| {
        x >= r && y >= r && z >= r && x < nx + r && y < ny + r && z < nz + r && m.get(x - r, y - r, z - r)
    });
    let closed = erode(&dilate(&padded, r), r);
    BinaryMask::from_fn(m.dims, |x, y, z| closed.get(x + r, y + r, z + r))
}

/// Set every background voxel not 6-connected to the volume boundary.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = m.dims;
    let mut outside = vec![false; m.bits.len()];
    let mut stack = Vec::new();
    let seed = |x: usize, y: usize, z: usize, outside: &mut Vec<bool>, stack: &mut Vec<usize>| {
        let i = m.index(x, y, z);
        if !m.bits[i] && !outside[i] {
            outside[i] = true;
            stack.push(i);
        }
    };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
                    seed(x, y, z, &mut outside, &mut stack);
                }
            }
        }
    }
    while let Some(i) = stack.pop() {
        let x = i % nx;
        let y = (i / nx) % ny;
        let z = i / (nx * ny);
        if x > 0 {
            seed(x - 1, y, z, &mut outside, &mut stack);
        }
        if x + 1 < nx {
            seed(x + 1, y, z, &mut outside, &mut stack);
        }
        if y > 0 {
            seed(x, y - 1, z, &mut outside, &mut stack);
        }
        if y + 1 < ny {
            seed(x, y + 1, z, &mut outside, &mut stack);
        }
        if z > 0 {
            seed(x, y, z - 1, &mut outside, &mut stack);
        }
        if z + 1 < nz {
            seed(x, y, z + 1, &mut outside, &mut stack);
        }
    }
    BinaryMask {
        dims: m.dims,
        bits: outside.into_iter().map(|o| !o).collect(),
    }
}

/// Otsu threshold, closing with a radius-2 ball, hole filling.
pub fn compute_mask(v: &Volume) -> Result<BinaryMask> {
    let t = otsu_threshold(v);
    let raw = threshold_mask(v, t);
    if raw.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(fill_holes(&close(&raw, CLOSING_RADIUS)))
}
