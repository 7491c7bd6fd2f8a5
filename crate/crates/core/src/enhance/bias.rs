//! Single-resolution N4-style multiplicative bias correction.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::mask::BinaryMask;
use crate::volume::Volume;
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 200;
pub const FWHM: f64 = 0.15;
pub const WIENER_NOISE: f64 = 0.01;
/// B-spline spans per masked-extent dimension.
pub const SPANS: usize = 4;
pub const MAX_DYNAMIC_RANGE: f64 = 10.0;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_CONV_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasField {
    pub dims: [usize; 3],
    pub field: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BiasCorrection {
    pub corrected: Volume,
    pub field: BiasField,
    pub iterations: usize,
    /// Additive shift applied to make masked intensities positive.
    pub shift: f64,
    pub converged: bool,
}

/// Divide out a smooth multiplicative field estimated inside `mask`.
pub fn bias_correct(v: &Volume, mask: &BinaryMask, max_iters: usize, conv_tol: f64) -> Result<BiasCorrection> {
    if mask.dims != v.dims {
        return Err(Error::InvalidArgument(format!(
            "mask dims {:?} differ from volume dims {:?}",
            mask.dims, v.dims
        )));
    }
    let idx: Vec<usize> = (0..v.len()).filter(|&i| mask.bits[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &idx {
        lo = lo.min(v.data[i]);
        hi = hi.max(v.data[i]);
    }
    let shift = if lo > 0.0 {
        0.0
    } else if hi > lo {
        -lo + 0.01 * (hi - lo)
    } else {
        return Err(Error::BiasCorrection(format!(
            "masked intensities are constant and non-positive ({lo}); cannot shift"
        )));
    };
    let log_u: Vec<f64> = idx.iter().map(|&i| (v.data[i] + shift).ln()).collect();

    let grid = SplineGrid::new(v.dims, mask);
    let mut log_field = vec![0.0; v.len()];
    let mut iterations = 0;
    let mut converged = false;
    let mut planner = FftPlanner::<f64>::new();
    while iterations < max_iters {
        iterations += 1;
        let current: Vec<f64> = idx.iter().zip(&log_u).map(|(&i, &u)| u - log_field[i]).collect();
        let sharpened = match sharpen(&current, &mut planner) {
            Some(s) => s,
            None => {
                converged = true;
                break;
            }
        };
        let mut residual = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            residual[i] = current[k] - sharpened[k];
        }
        let update = grid.fit_and_evaluate(&residual, mask);
        // a constant log offset is a global gain, not bias; dropping it keeps
        // the field from drifting and the convergence measure meaningful
        let offset = idx.iter().map(|&i| update[i]).sum::<f64>() / idx.len() as f64;
        let mut d2 = 0.0;
        for i in 0..v.len() {
            log_field[i] += update[i] - offset;
        }
        for &i in &idx {
            d2 += (update[i] - offset).powi(2);
        }
        // RMS log-field update, roughly the spread of the ratio between
        // successive field estimates
        let change = (d2 / idx.len() as f64).sqrt();
        if !change.is_finite() {
            return Err(Error::BiasCorrection(format!("non-finite field update at iteration {iterations}")));
        }
        if change < conv_tol {
            converged = true;
            break;
        }
    }

    let mean = idx.iter().map(|&i| log_field[i]).sum::<f64>() / idx.len() as f64;
    let field: Vec<f64> = log_field.iter().map(|&f| (f - mean).exp()).collect();
    let (fmin, fmax) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &f| (a.min(f), b.max(f)));
    if !fmin.is_finite() || !fmax.is_finite() || fmin <= 0.0 {
        return Err(Error::BiasCorrection("field contains non-finite or non-positive values".into()));
    }
    if fmax / fmin > MAX_DYNAMIC_RANGE {
        return Err(Error::BiasCorrection(format!(
            "field dynamic range {:.3} exceeds {MAX_DYNAMIC_RANGE} after {iterations} iterations (min {fmin:.4}, max {fmax:.4})",
            fmax / fmin
        )));
    }
    let mut corrected = v.data.clone();
    for &i in &idx {
        corrected[i] = (v.data[i] + shift) / field[i] - shift;
    }
    Ok(BiasCorrection {
        corrected: v.with_data(corrected),
        field: BiasField { dims: v.dims, field },
        iterations,
        shift,
        converged,
    })
}

/// Map each log intensity to its conditional expectation under the
/// deconvolved (sharpened) histogram. `None` when the values are constant.
fn sharpen(values: &[f64], planner: &mut FftPlanner<f64>) -> Option<Vec<f64>> {
    let bins = HISTOGRAM_BINS;
    let (bin_min, bin_max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(bin_max - bin_min > 1e-12) {
        return None;
    }
    let slope = (bin_max - bin_min) / (bins - 1) as f64;
    let mut hist = vec![0.0; bins];
    for &x in values {
        let c = (x - bin_min) / slope;
        let k = (c.floor() as usize).min(bins - 1);
        let off = c - k as f64;
        hist[k] += 1.0 - off;
        if k + 1 < bins {
            hist[k + 1] += off;
        }
    }

    let padded = 1usize << ((bins as f64).log2().ceil() as u32 + 1);
    let offset = (0.5 * (padded - bins) as f64).floor() as usize;
    let fft = planner.plan_fft_forward(padded);
    let ifft = planner.plan_fft_inverse(padded);
    let forward = |mut buf: Vec<Complex<f64>>| {
        fft.process(&mut buf);
        buf
    };
    let inverse = |mut buf: Vec<Complex<f64>>| {
        ifft.process(&mut buf);
        let s = 1.0 / padded as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    };

    let mut vbuf = vec![Complex::new(0.0, 0.0); padded];
    for (k, &h) in hist.iter().enumerate() {
        vbuf[k + offset].re = h;
    }
    let vf = forward(vbuf);

    let scaled_fwhm = FWHM / slope;
    let exp_factor = 4.0 * std::f64::consts::LN_2 / (scaled_fwhm * scaled_fwhm);
    let scale = 2.0 * (std::f64::consts::LN_2 / std::f64::consts::PI).sqrt() / scaled_fwhm;
    let mut fbuf = vec![Complex::new(0.0, 0.0); padded];
    fbuf[0].re = scale;
    for n in 1..=padded / 2 {
        let g = scale * (-((n * n) as f64) * exp_factor).exp();
        fbuf[n].re = g;
        fbuf[padded - n].re = g;
    }
    let ff = forward(fbuf);

    let uf: Vec<Complex<f64>> = vf
        .iter()
        .zip(&ff)
        .map(|(v, f)| v * f.conj() / (f.norm_sqr() + WIENER_NOISE))
        .collect();
    let u: Vec<f64> = inverse(uf).iter().map(|c| c.re.max(0.0)).collect();

    let num_in: Vec<Complex<f64>> = u
        .iter()
        .enumerate()
        .map(|(n, &un)| Complex::new((bin_min + (n as f64 - offset as f64) * slope) * un, 0.0))
        .collect();
    let conv = |x: Vec<Complex<f64>>| -> Vec<f64> {
        let xf = forward(x);
        inverse(xf.iter().zip(&ff).map(|(a, b)| a * b).collect())
            .iter()
            .map(|c| c.re)
            .collect()
    };
    let num = conv(num_in);
    let den = conv(u.iter().map(|&x| Complex::new(x, 0.0)).collect());
    let e: Vec<f64> = (0..bins)
        .map(|k| {
            let d = den[k + offset];
            if d != 0.0 {
                num[k + offset] / d
            } else {
                0.0
            }
        })
        .collect();

    Some(
        values
            .iter()
            .map(|&x| {
                let c = (x - bin_min) / slope;
                let k = (c.floor() as usize).min(bins - 1);
                if k + 1 >= bins {
                    e[k]
                } else {
                    e[k] + (e[k + 1] - e[k]) * (c - k as f64)
                }
            })
            .collect(),
    )
}

/// Uniform cubic B-spline basis on one axis.
struct AxisBasis {
    /// First control point and four weights for each voxel coordinate.
    entries: Vec<(usize, [f64; 4])>,
    controls: usize,
}

impl AxisBasis {
    fn new(n: usize, lo: usize, hi: usize) -> Self {
        let extent = (hi - lo) as f64;
        let entries = (0..n)
            .map(|x| {
                let u = if extent > 0.0 {
                    ((x as f64 - lo as f64) / extent * SPANS as f64).clamp(0.0, SPANS as f64)
                } else {
                    0.0
                };
                let s = (u.floor() as usize).min(SPANS - 1);
                let t = u - s as f64;
                let t2 = t * t;
                let t3 = t2 * t;
                let w = [
                    (1.0 - t).powi(3) / 6.0,
                    (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                    (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                    t3 / 6.0,
                ];
                (s, w)
            })
            .collect();
        Self {
            entries,
            controls: SPANS + 3,
        }
    }
}

/// Cubic B-spline lattice over the mask's bounding box, fitted by the
/// scattered-data approximation of Lee, Wolberg and Shin.
struct SplineGrid {
    dims: [usize; 3],
    axes: [AxisBasis; 3],
}

impl SplineGrid {
    fn new(dims: [usize; 3], mask: &BinaryMask) -> Self {
        let (lo, hi) = mask.bounding_box().unwrap_or(([0; 3], [dims[0] - 1, dims[1] - 1, dims[2] - 1]));
        Self {
            dims,
            axes: [
                AxisBasis::new(dims[0], lo[0], hi[0]),
                AxisBasis::new(dims[1], lo[1], hi[1]),
                AxisBasis::new(dims[2], lo[2], hi[2]),
            ],
        }
    }

    /// Contract a voxel grid against per-axis weight powers, producing a
    /// control-lattice array. Separable, so cost is linear in voxels.
    fn contract(&self, data: &[f64], power: i32) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let c = self.axes[0].controls;
        // along x: [z][y][cx]
        let mut a = vec![0.0; nz * ny * c];
        for z in 0..nz {
            for y in 0..ny {
                let row = &data[nx * (y + ny * z)..nx * (y + ny * z + 1)];
                let out = &mut a[c * (y + ny * z)..c * (y + ny * z + 1)];
                for (x, &r) in row.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let (s, w) = self.axes[0].entries[x];
                    for k in 0..4 {
                        out[s + k] += w[k].powi(power) * r;
                    }
                }
            }
        }
        // along y: [z][cy][cx]
        let mut b = vec![0.0; nz * c * c];
        for z in 0..nz {
            for y in 0..ny {
                let (s, w) = self.axes[1].entries[y];
                for k in 0..4 {
                    let wk = w[k].powi(power);
                    for cx in 0..c {
                        b[cx + c * ((s + k) + c * z)] += wk * a[cx + c * (y + ny * z)];
                    }
                }
            }
        }
        // along z: [cz][cy][cx]
        let mut out = vec![0.0; c * c * c];
        for z in 0..nz {
            let (s, w) = self.axes[2].entries[z];
            for k in 0..4 {
                let wk = w[k].powi(power);
                for j in 0..c * c {
                    out[j + c * c * (s + k)] += wk * b[j + c * c * z];
                }
            }
        }
        out
    }

    fn evaluate(&self, phi: &[f64]) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let c = self.axes[0].controls;
        // along z: [z][cy][cx]
        let mut a = vec![0.0; nz * c * c];
        for z in 0..nz {
            let (s, w) = self.axes[2].entries[z];
            for k in 0..4 {
                for j in 0..c * c {
                    a[j + c * c * z] += w[k] * phi[j + c * c * (s + k)];
                }
            }
        }
        // along y: [z][y][cx]
        let mut b = vec![0.0; nz * ny * c];
        for z in 0..nz {
            for y in 0..ny {
                let (s, w) = self.axes[1].entries[y];
                for k in 0..4 {
                    for cx in 0..c {
                        b[cx + c * (y + ny * z)] += w[k] * a[cx + c * ((s + k) + c * z)];
                    }
                }
            }
        }
        let mut out = vec![0.0; nx * ny * nz];
        for z in 0..nz {
            for y in 0..ny {
                let base = nx * (y + ny * z);
                let row = &b[c * (y + ny * z)..c * (y + ny * z + 1)];
                for x in 0..nx {
                    let (s, w) = self.axes[0].entries[x];
                    out[base + x] = w[0] * row[s] + w[1] * row[s + 1] + w[2] * row[s + 2] + w[3] * row[s + 3];
                }
            }
        }
        out
    }

    fn fit_and_evaluate(&self, residual: &[f64], mask: &BinaryMask) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        // per-voxel normalizer: sum of squared tensor weights, separable
        let sq = |axis: &AxisBasis, i: usize| axis.entries[i].1.iter().map(|w| w * w).sum::<f64>();
        let mut scaled = vec![0.0; residual.len()];
        let mut indicator = vec![0.0; residual.len()];
        for z in 0..nz {
            let sz = sq(&self.axes[2], z);
            for y in 0..ny {
                let syz = sz * sq(&self.axes[1], y);
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    if mask.bits[i] {
                        scaled[i] = residual[i] / (syz * sq(&self.axes[0], x));
                        indicator[i] = 1.0;
                    }
                }
            }
        }
        let num = self.contract(&scaled, 3);
        let den = self.contract(&indicator, 2);
        let phi: Vec<f64> = num
            .iter()
            .zip(&den)
            .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
            .collect();
        self.evaluate(&phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_mask(n: usize) -> BinaryMask {
        let c = (n as f64 - 1.0) / 2.0;
        let r = n as f64 * 0.4;
        BinaryMask::from_fn([n, n, n], |x, y, z| {
            (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2) <= r * r
        })
    }

    fn cov(v: &Volume, m: &BinaryMask) -> f64 {
        let vals: Vec<f64> = (0..v.len()).filter(|&i| m.bits[i]).map(|i| v.data[i]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        var.sqrt() / mean
    }

    #[test]
    fn unbiased_constant_phantom() {
        let m = ball_mask(24);
        let v = Volume::from_fn([24; 3], [1.0; 3], |x, y, z| if m.get(x, y, z) { 100.0 } else { 0.0 }).unwrap();
        let out = bias_correct(&v, &m, 50, 1e-3).unwrap();
        assert!(out.field.field.iter().all(|f| (f - 1.0).abs() < 0.01));
        for (a, b) in v.data.iter().zip(&out.corrected.data) {
            assert!((a - b).abs() <= 0.01 * a.abs().max(1e-9));
        }
    }

    #[test]
    fn smooth_field_is_removed() {
        let n = 32;
        let m = ball_mask(n);
        let field = |x: usize, y: usize, z: usize| {
            let t = (x + y + z) as f64 / (3 * (n - 1)) as f64;
            0.7 + 0.6 * t
        };
        let v = Volume::from_fn([n; 3], [1.0; 3], |x, y, z| {
            if m.get(x, y, z) {
                let tissue = if (x / 4 + y / 4 + z / 4) % 2 == 0 { 80.0 } else { 120.0 };
                tissue * field(x, y, z)
            } else {
                0.0
            }
        })
        .unwrap();
        let clean = Volume::from_fn([n; 3], [1.0; 3], |x, y, z| {
            if m.get(x, y, z) {
                if (x / 4 + y / 4 + z / 4) % 2 == 0 { 80.0 } else { 120.0 }
            } else {
                0.0
            }
        })
        .unwrap();
        let out = bias_correct(&v, &m, 50, 1e-4).unwrap();
        let before = cov(&v, &m);
        let after = cov(&out.corrected, &m);
        assert!(after < before, "{before} -> {after}, clean {}", cov(&clean, &m));
    }

    #[test]
    fn single_tissue_cov_halved() {
        let n = 40;
        let m = ball_mask(n);
        let c = (n as f64 - 1.0) / 2.0;
        let v = Volume::from_fn([n; 3], [1.0; 3], |x, y, z| {
            let (u, w) = ((x as f64 - c) / c, (z as f64 - c) / c);
            let f = 1.0 + 0.3 * (0.5 * u + 0.5 * (w * 1.5).sin()).clamp(-1.0, 1.0);
            if m.get(x, y, z) {
                100.0 * f
            } else {
                0.0
            }
        })
        .unwrap();
        let out = bias_correct(&v, &m, 50, 1e-4).unwrap();
        let (before, after) = (cov(&v, &m), cov(&out.corrected, &m));
        eprintln!("cov {before} -> {after} in {} iterations", out.iterations);
        assert!(after <= 0.5 * before);
    }

    #[test]
    fn log_field_has_zero_mean() {
        let m = ball_mask(20);
        let v = Volume::from_fn([20; 3], [1.0; 3], |x, _, _| 50.0 + 2.0 * x as f64).unwrap();
        let out = bias_correct(&v, &m, 20, 1e-4).unwrap();
        let idx: Vec<usize> = (0..v.len()).filter(|&i| m.bits[i]).collect();
        let mean = idx.iter().map(|&i| out.field.field[i].ln()).sum::<f64>() / idx.len() as f64;
        assert!(mean.abs() < 1e-6);
    }

    #[test]
    fn empty_mask_errors() {
        let v = Volume::new([4, 4, 4], [1.0; 3], vec![1.0; 64]).unwrap();
        assert!(matches!(bias_correct(&v, &BinaryMask::empty([4; 3]), 10, 1e-3), Err(Error::EmptyMask)));
    }

    #[test]
    fn scale_equivariance() {
        let m = ball_mask(20);
        let v = Volume::from_fn([20; 3], [1.0; 3], |x, y, z| 40.0 + x as f64 * 3.0 + ((y * z) % 7) as f64).unwrap();
        let a = bias_correct(&v, &m, 10, 1e-6).unwrap();
        let scaled = v.with_data(v.data.iter().map(|x| x * 7.5).collect());
        let b = bias_correct(&scaled, &m, 10, 1e-6).unwrap();
        for (fa, fb) in a.field.field.iter().zip(&b.field.field) {
            assert!((fa - fb).abs() < 1e-9);
        }
        for (ca, cb) in a.corrected.data.iter().zip(&b.corrected.data) {
            assert!((ca * 7.5 - cb).abs() < 1e-7 * cb.abs().max(1.0));
        }
    }

    #[test]
    fn nonpositive_values_are_shifted() {
        let m = ball_mask(12);
        let v = Volume::from_fn([12; 3], [1.0; 3], |x, _, _| x as f64 - 3.0).unwrap();
        let out = bias_correct(&v, &m, 5, 1e-3).unwrap();
        assert!(out.shift > 0.0);
    }
}
