//! Linear threshold model `th = w0 + w1 * mean + w2 * max`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::volume::Volume;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    /// Pearson correlation between fitted and manual thresholds.
    pub fit_r: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub mean: f64,
    pub max: f64,
    pub threshold: f64,
}

impl CalibrationModel {
    /// Model with given coefficients that was not fitted to data.
    pub fn explicit(w0: f64, w1: f64, w2: f64) -> Self {
        Self {
            w0,
            w1,
            w2,
            fit_r: 0.0,
            n_samples: 0,
        }
    }

    pub fn predict(&self, mean: f64, max: f64) -> f64 {
        self.w0 + self.w1 * mean + self.w2 * max
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if ![m.w0, m.w1, m.w2].iter().all(|w| w.is_finite()) || !(-1.0..=1.0).contains(&m.fit_r) {
            return Err(Error::InvalidArgument("calibration coefficients must be finite, fit_r in [-1, 1]".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Arithmetic mean and maximum over all voxels.
pub fn intensity_stats(v: &Volume) -> Result<(f64, f64)> {
    if v.data.is_empty() {
        return Err(Error::InvalidVolume("empty volume".into()));
    }
    let mean = v.data.iter().sum::<f64>() / v.data.len() as f64;
    Ok((mean, v.min_max().1))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Least-squares fit of the threshold model. `fit_r` is 0 when either the
/// predictions or the manual thresholds are constant.
pub fn fit_calibration(samples: &[CalibrationSample]) -> Result<CalibrationModel> {
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !(s.mean.is_finite() && s.max.is_finite() && s.threshold.is_finite())) {
        return Err(Error::InvalidArgument("non-finite calibration sample".into()));
    }
    let n = samples.len();
    // columns scaled to unit max-abs for conditioning, undone afterwards
    let col_scale = |f: fn(&CalibrationSample) -> f64| {
        let s = samples.iter().map(|x| f(x).abs()).fold(0.0, f64::max);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let s1 = col_scale(|s| s.mean);
    let s2 = col_scale(|s| s.max);
    let x = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => 1.0,
        1 => samples[r].mean / s1,
        _ => samples[r].max / s2,
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.threshold));
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient(format!(
            "design matrix [1, mean, max] has condition number {:.3e}",
            smax / smin
        )));
    }
    let w = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let model = CalibrationModel {
        w0: w[0],
        w1: w[1] / s1,
        w2: w[2] / s2,
        fit_r: 0.0,
        n_samples: n,
    };
    let predicted: Vec<f64> = samples.iter().map(|s| model.predict(s.mean, s.max)).collect();
    let manual: Vec<f64> = samples.iter().map(|s| s.threshold).collect();
    Ok(CalibrationModel {
        fit_r: pearson(&predicted, &manual),
        ..model
    })
}

/// Threshold and whether it falls strictly between the mean and the maximum.
pub fn predict_threshold(m: &CalibrationModel, mean: f64, max: f64) -> (f64, bool) {
    let th = m.predict(mean, max);
    (th, th.is_finite() && mean < th && th < max)
}

/// Read calibration samples from CSV with header `mean,max,threshold`.
pub fn read_samples_csv(reader: impl Read) -> Result<Vec<CalibrationSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let want = ["mean", "max", "threshold"];
    if headers.len() != 3 || headers.iter().zip(want).any(|(h, w)| !h.eq_ignore_ascii_case(w)) {
        return Err(Error::InvalidArgument(format!(
            "calibration CSV header must be mean,max,threshold (got {:?})",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
