use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::groups::GroupSample;
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_BOOTSTRAP: usize = 1000;

/// Pairwise-distance comparison of two groups. No multiple-comparison
/// correction is applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdmaReport {
    pub pairs: Vec<(usize, usize)>,
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub ratios: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub significant: Vec<bool>,
    /// Pair indices by decreasing |ln ratio|.
    pub order: Vec<usize>,
    pub percent_significant: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub bootstrap: usize,
    pub seed: u64,
}

impl EdmaReport {
    pub fn significant_count(&self) -> usize {
        self.significant.iter().filter(|s| **s).count()
    }
}

/// All (i, j) with i < j, row-major.
pub fn landmark_pairs(l: usize) -> Vec<(usize, usize)> {
    (0..l).flat_map(|i| (i + 1..l).map(move |j| (i, j))).collect()
}

/// Inter-landmark distances of every subject, one row per subject.
pub fn distance_rows(g: &GroupSample, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
    g.x.iter()
        .map(|row| {
            pairs
                .iter()
                .map(|&(i, j)| {
                    (0..3)
                        .map(|d| (row[3 * i + d] - row[3 * j + d]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}

/// Mean form: arithmetic mean over subjects of each distance.
pub fn mean_distances(rows: &[Vec<f64>], pick: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut acc = vec![0.0; rows.first().map_or(0, Vec::len)];
    let mut n = 0usize;
    for i in pick {
        for (a, v) in acc.iter_mut().zip(&rows[i]) {
            *a += v;
        }
        n += 1;
    }
    acc.iter().map(|a| a / n as f64).collect()
}

/// Linear-interpolation percentile of sorted data (Hyndman–Fan type 7),
/// `q` in [0, 1].
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Compare mean inter-landmark distances of `a` over `b` with percentile
/// bootstrap intervals at level `100 - alpha` percent.
pub fn edma(a: &GroupSample, b: &GroupSample, alpha: f64, bootstrap: usize, seed: u64) -> Result<EdmaReport> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Group(format!("EDMA needs at least 2 subjects per group (got {} and {})", a.len(), b.len())));
    }
    let l = a.landmark_count();
    if b.landmark_count() != l || l < 2 {
        return Err(Error::Group("groups have different landmark counts".into()));
    }
    if !(alpha > 0.0 && alpha < 100.0) {
        return Err(Error::OutOfRange(format!("alpha must be a percentage in (0, 100), got {alpha}")));
    }
    if bootstrap == 0 {
        return Err(Error::OutOfRange("bootstrap count must be positive".into()));
    }
    let pairs = landmark_pairs(l);
    let (da, db) = (distance_rows(a, &pairs), distance_rows(b, &pairs));
    let mean_a = mean_distances(&da, 0..da.len());
    let mean_b = mean_distances(&db, 0..db.len());
    for (p, (&ma, &mb)) in mean_a.iter().zip(&mean_b).enumerate() {
        if !(ma > 0.0 && mb > 0.0) {
            let (i, j) = pairs[p];
            return Err(Error::DegenerateConfiguration(format!(
                "landmarks {i} and {j} coincide across a whole group"
            )));
        }
    }
    let ratios: Vec<f64> = mean_a.iter().zip(&mean_b).map(|(x, y)| x / y).collect();

    // replicate r draws from its own stream, so thread count never matters
    let reps: Vec<Vec<f64>> = (0..bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let (ka, kb) = (da.len(), db.len());
            let ia: Vec<usize> = (0..ka).map(|_| rng.random_range(0..ka)).collect();
            let ib: Vec<usize> = (0..kb).map(|_| rng.random_range(0..kb)).collect();
            let ma = mean_distances(&da, ia.into_iter());
            let mb = mean_distances(&db, ib.into_iter());
            ma.iter().zip(&mb).map(|(x, y)| x / y).collect()
        })
        .collect();

    let (q_lo, q_hi) = (alpha / 200.0, 1.0 - alpha / 200.0);
    let mut ci_low = Vec::with_capacity(pairs.len());
    let mut ci_high = Vec::with_capacity(pairs.len());
    for p in 0..pairs.len() {
        let mut v: Vec<f64> = reps.iter().map(|r| r[p]).filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            ci_low.push(f64::NAN);
            ci_high.push(f64::NAN);
        } else {
            ci_low.push(quantile_type7(&v, q_lo));
            ci_high.push(quantile_type7(&v, q_hi));
        }
    }
    let significant: Vec<bool> = ci_low.iter().zip(&ci_high).map(|(&lo, &hi)| lo > 1.0 || hi < 1.0).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&x, &y| ratios[y].ln().abs().total_cmp(&ratios[x].ln().abs()));
    let n_sig = significant.iter().filter(|s| **s).count();
    Ok(EdmaReport {
        percent_significant: 100.0 * n_sig as f64 / pairs.len() as f64,
        pairs,
        mean_a,
        mean_b,
        ratios,
        ci_low,
        ci_high,
        significant,
        order,
        alpha,
        bootstrap,
        seed,
    })
}

/// The `k` most different significant pairs, in report order.
pub fn top_significant_pairs(e: &EdmaReport, k: usize) -> Result<Vec<usize>> {
    let n = e.significant_count();
    if k < 2 || k > n {
        return Err(Error::OutOfRange(format!(
            "biomarker count {k} must be in 2..={n} (significant pairs)"
        )));
    }
    Ok(e.order.iter().copied().filter(|&p| e.significant[p]).take(k).collect())
}

/// Per-subject values of the `k` top significant distances, for every
/// subject of `groups` in order.
pub fn select_edma_biomarkers(e: &EdmaReport, groups: &[&GroupSample], k: usize) -> Result<Vec<Vec<f64>>> {
    let top = top_significant_pairs(e, k)?;
    let pairs: Vec<(usize, usize)> = top.iter().map(|&p| e.pairs[p]).collect();
    Ok(groups.iter().flat_map(|g| distance_rows(g, &pairs)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(id: &str, k: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> GroupSample {
        GroupSample {
            group_id: id.into(),
            ids: (0..k).map(|i| format!("{id}{i}")).collect(),
            names: (0..5).map(|i| format!("p{i}")).collect(),
            x: (0..k).map(|s| (0..5).flat_map(|i| f(s, i)).collect()).collect(),
        }
    }

    fn base(s: usize, i: usize) -> [f64; 3] {
        let w = ((s * 31 + i * 17) % 11) as f64 * 0.05;
        [i as f64 * 10.0 + w, (i * i) as f64 + w * 0.5, 3.0 * (i % 2) as f64 - w]
    }

    #[test]
    fn identical_groups_have_no_significant_pairs() {
        let a = group("a", 8, base);
        let r = edma(&a, &a, 10.0, 500, 1).unwrap();
        assert_eq!(r.pairs.len(), 10);
        assert_eq!(r.significant_count(), 0);
        assert!(r.ci_low.iter().zip(&r.ci_high).all(|(l, h)| l <= h));
    }

    #[test]
    fn doubled_group_halves_every_ratio() {
        let a = group("a", 8, base);
        let b = group("b", 8, |s, i| base(s, i).map(|v| 2.0 * v));
        let r = edma(&a, &b, 10.0, 200, 2).unwrap();
        assert!(r.ratios.iter().all(|&x| x == 0.5));
        assert_eq!(r.significant_count(), 10);
        assert_eq!(r.order, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = group("a", 6, base);
        let b = group("b", 6, |s, i| base(s + 3, i));
        assert_eq!(edma(&a, &b, 10.0, 100, 9).unwrap(), edma(&a, &b, 10.0, 100, 9).unwrap());
    }

    #[test]
    fn coincident_landmarks_error() {
        let a = group("a", 4, |_, i| if i < 2 { [0.0; 3] } else { [i as f64, 0.0, 0.0] });
        assert!(edma(&a, &a, 10.0, 10, 0).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert!((quantile_type7(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_type7(&v, 0.05) - 1.15).abs() < 1e-12);
    }
}
