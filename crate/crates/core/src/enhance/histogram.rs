//! Quantile-based histogram matching against a stored reference histogram.

use serde::{Deserialize, Serialize};

use crate::volume::Volume;
use crate::{Error, Outcome, Result};

pub const DEFAULT_LEVELS: usize = 256;
pub const DEFAULT_MATCH_POINTS: usize = 7;

/// Intensity histogram of a reference scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub source_id: String,
}

impl ReferenceHistogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, source_id: impl Into<String>) -> Result<Self> {
        let h = Self {
            bin_edges,
            counts,
            source_id: source_id.into(),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() < 2 || self.bin_edges.len() != self.counts.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "reference histogram needs >= 2 bins and bins + 1 edges (got {} counts, {} edges)",
                self.counts.len(),
                self.bin_edges.len()
            )));
        }
        if self.bin_edges.windows(2).any(|w| !(w[1] > w[0])) || self.bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("bin edges must be finite and increasing".into()));
        }
        if self.counts.iter().sum::<u64>() == 0 {
            return Err(Error::InvalidArgument("reference histogram is empty".into()));
        }
        Ok(())
    }

    /// Histogram of a volume with `levels` equal bins over its value range.
    pub fn from_volume(v: &Volume, levels: usize, source_id: impl Into<String>) -> Result<Self> {
        let (lo, hi) = v.min_max();
        if !(hi > lo) {
            return Err(Error::InvalidArgument("constant volume has no histogram".into()));
        }
        let dist = Binned::from_values(&v.data, lo, hi, levels.max(2));
        Self::new(dist.edges, dist.counts, source_id)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(text)?;
        h.validate()?;
        Ok(h)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reference histogram shipped with the crate, computed from a synthetic
    /// T1-weighted head phantom.
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../data/reference_histogram.json"))
            .expect("bundled reference histogram is valid")
    }

    fn binned(&self) -> Binned {
        Binned {
            edges: self.bin_edges.clone(),
            counts: self.counts.clone(),
        }
    }
}

/// Piecewise-uniform distribution described by bin edges and counts.
#[derive(Debug, Clone)]
struct Binned {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl Binned {
    fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect::<Vec<_>>();
        let mut counts = vec![0u64; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    fn total(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64
    }

    fn mean(&self) -> f64 {
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * 0.5 * (self.edges[k] + self.edges[k + 1]))
            .sum();
        s / self.total()
    }

    /// Lower edge of the first occupied bin and upper edge of the last one.
    fn support(&self) -> (f64, f64) {
        let first = self.counts.iter().position(|&c| c > 0).unwrap_or(0);
        let last = self.counts.iter().rposition(|&c| c > 0).unwrap_or(self.counts.len() - 1);
        (self.edges[first], self.edges[last + 1])
    }

    /// Quantile `p` of the distribution restricted to values >= `floor`.
    fn quantile_above(&self, p: f64, floor: f64) -> f64 {
        // (lower edge, upper edge, mass) of each bin after truncation
        let parts: Vec<(f64, f64, f64)> = self
            .counts
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| {
                let (a, b) = (self.edges[k], self.edges[k + 1]);
                if c == 0 || b <= floor {
                    None
                } else if a >= floor {
                    Some((a, b, c as f64))
                } else {
                    Some((floor, b, c as f64 * (b - floor) / (b - a)))
                }
            })
            .collect();
        let total: f64 = parts.iter().map(|p| p.2).sum();
        if parts.is_empty() || total <= 0.0 {
            return floor;
        }
        let target = p.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        for &(a, b, m) in &parts {
            if acc + m >= target {
                let f = if m > 0.0 { (target - acc) / m } else { 0.0 };
                return a + f * (b - a);
            }
            acc += m;
        }
        parts.last().unwrap().1
    }
}

/// Map volume intensities so their upper quantiles line up with the
/// reference's.
///
/// Voxels below the image mean (background) do not contribute to the
/// quantile estimates but are mapped linearly between the minima and the
/// mean levels. The transfer function is monotone and its range is the
/// reference's occupied range.
pub fn histogram_match(
    v: &Volume,
    reference: &ReferenceHistogram,
    levels: usize,
    match_points: usize,
) -> Result<Outcome<Volume>> {
    if levels < 2 || match_points < 1 || match_points > levels {
        return Err(Error::InvalidArgument(format!(
            "need levels >= 2 and 1 <= match_points <= levels (got {levels}, {match_points})"
        )));
    }
    reference.validate()?;
    let (src_min, src_max) = v.min_max();
    if !(src_max > src_min) {
        return Ok(Outcome::warn(
            v.clone(),
            "histogram matching skipped: constant-valued volume",
        ));
    }
    let src_mean = v.data.iter().sum::<f64>() / v.len() as f64;
    let src = Binned::from_values(
        &v.data.iter().copied().filter(|&x| x >= src_mean).collect::<Vec<_>>(),
        src_mean,
        src_max,
        levels,
    );
    let refd = reference.binned();
    let ref_mean = refd.mean();
    let (ref_min, ref_max) = refd.support();

    let n = match_points + 2;
    let mut table = Vec::with_capacity(n);
    table.push((src_mean, ref_mean));
    for j in 1..=match_points {
        let p = j as f64 / (match_points + 1) as f64;
        table.push((src.quantile_above(p, src_mean), refd.quantile_above(p, ref_mean)));
    }
    table.push((src_max, ref_max));
    // enforce monotone columns against histogram round-off
    for k in 1..n {
        table[k].0 = table[k].0.max(table[k - 1].0);
        table[k].1 = table[k].1.max(table[k - 1].1);
    }

    let lower_gradient = if src_mean > src_min {
        (ref_mean - ref_min) / (src_mean - src_min)
    } else {
        0.0
    };
    let map = |x: f64| -> f64 {
        if x < table[0].0 {
            return ref_min + (x - src_min) * lower_gradient;
        }
        if x >= table[n - 1].0 {
            return ref_max;
        }
        for k in 0..n - 1 {
            let (s0, r0) = table[k];
            let (s1, r1) = table[k + 1];
            if x < s1 {
                if s1 > s0 {
                    return r0 + (x - s0) * (r1 - r0) / (s1 - s0);
                }
                return r0;
            }
        }
        ref_max
    };
    let data = v.data.iter().map(|&x| map(x).clamp(ref_min, ref_max)).collect();
    Ok(Outcome::ok(v.with_data(data)))
}
