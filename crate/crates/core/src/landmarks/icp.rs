use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mesh::{estimate_rigid, Bvh, SimilarityTransform, TriMesh, Vec3};
use crate::{Error, Result};

pub const ICP_MAX_ITERS: usize = 50;
pub const ICP_TRIM: f64 = 0.9;
pub const ICP_MAX_SAMPLES: usize = 5000;
/// Stop once the trimmed RMS improves by less than this fraction.
pub const ICP_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    /// Trimmed RMS distance after the final iteration, mm.
    pub rms: f64,
    /// Trimmed RMS per iteration; non-increasing.
    pub history: Vec<f64>,
}

/// Source vertex indices used for correspondences: all of them up to
/// [`ICP_MAX_SAMPLES`], otherwise a seeded uniform choice (sorted).
pub fn sample_indices(n: usize, seed: u64) -> Vec<usize> {
    if n <= ICP_MAX_SAMPLES {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, ICP_MAX_SAMPLES).into_vec();
    idx.sort_unstable();
    idx
}

fn boxes_overlap(a: (Vec3, Vec3), b: (Vec3, Vec3)) -> bool {
    (0..3).all(|d| a.0[d] <= b.1[d] && b.0[d] <= a.1[d])
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    /// Untransformed source point.
    p: Vec3,
    /// Closest target point and the normal of its triangle.
    q: Vec3,
    n: Vec3,
}

/// Small rigid increment minimizing the linearized point-to-plane error of
/// the currently transformed source points. `None` when the system is
/// singular (e.g. a planar target leaves in-plane motion undetermined).
fn point_to_plane_step(xf: &SimilarityTransform, pairs: &[Pair]) -> Option<SimilarityTransform> {
    let mut a = Matrix6::<f64>::zeros();
    let mut b = Vector6::<f64>::zeros();
    for pr in pairs {
        let p = Vector3::from(xf.apply_rigid(pr.p));
        let Some(n) = Vector3::from(pr.n).try_normalize(0.0) else {
            continue;
        };
        let c = p.cross(&n);
        let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        let r = (p - Vector3::from(pr.q)).dot(&n);
        a += row * row.transpose();
        b -= row * r;
    }
    let x = a.cholesky()?.solve(&b);
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let w = Vector3::new(x[0], x[1], x[2]);
    let r = Rotation3::from_scaled_axis(w);
    Some(SimilarityTransform::from_parts(1.0, r.matrix(), &Vector3::new(x[3], x[4], x[5])))
}

/// Rigid trimmed ICP of `source` onto the surface of `target`.
pub fn icp_rigid(source: &TriMesh, target: &TriMesh, max_iters: usize, trim: f64, seed: u64) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(trim > 0.0 && trim <= 1.0) {
        return Err(Error::InvalidArgument(format!("ICP trim must be in (0, 1], got {trim}")));
    }
    let (sb, tb) = (source.bbox().unwrap(), target.bbox().unwrap());
    if !boxes_overlap(sb, tb) {
        return Err(Error::Icp("no correspondences: source and target bounding boxes are disjoint".into()));
    }
    let src: Vec<Vec3> = sample_indices(source.vertices.len(), seed)
        .into_iter()
        .map(|i| source.vertices[i])
        .collect();
    let keep = ((trim * src.len() as f64).ceil() as usize).clamp(3.min(src.len()), src.len());
    let bvh = Bvh::new(target);

    // pairs sorted by distance, trimmed to `keep`
    let correspond = |xf: &SimilarityTransform| -> (Vec<Pair>, f64) {
        let mut pairs: Vec<(f64, Pair)> = src
            .par_iter()
            .map(|&p| {
                let (q, d2, tri) = bvh.closest_point(xf.apply_rigid(p)).expect("target is nonempty");
                (d2, Pair { p, q, n: target.face_normal(tri) })
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.truncate(keep);
        let rms = (pairs.iter().map(|p| p.0).sum::<f64>() / keep as f64).sqrt();
        (pairs.into_iter().map(|(_, p)| p).collect(), rms)
    };

    let mut xf = SimilarityTransform::IDENTITY;
    let (mut pairs, mut rms) = correspond(&xf);
    let mut history = vec![rms];
    for _ in 0..max_iters {
        if rms == 0.0 {
            break;
        }
        // point-to-plane step first; it converges far faster on smooth
        // surfaces, where point-to-point correspondences slide
        let plane = point_to_plane_step(&xf, &pairs).map(|step| {
            let c = xf.then(&step);
            let (cp, cr) = correspond(&c);
            (c, cp, cr)
        });
        let (cand, cand_pairs, cand_rms) = match plane {
            Some(c) if c.2 <= rms => c,
            _ => {
                let (p, q): (Vec<Vec3>, Vec<Vec3>) = pairs.iter().map(|x| (x.p, x.q)).unzip();
                let c = estimate_rigid(&p, &q).map_err(|e| Error::Icp(e.to_string()))?;
                let (cp, cr) = correspond(&c);
                (c, cp, cr)
            }
        };
        // never step uphill
        if cand_rms > rms {
            break;
        }
        let improvement = (rms - cand_rms) / rms;
        xf = cand;
        pairs = cand_pairs;
        rms = cand_rms;
        history.push(rms);
        if improvement < ICP_REL_TOL {
            break;
        }
    }
    Ok(IcpResult {
        transform: xf,
        rms,
        history,
    })
}
