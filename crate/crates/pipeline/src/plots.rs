//! Static analysis plots: morphospace scatter with hulls, and EDMA pairs
//! drawn over the mean landmark configuration.

use image::{ImageFormat, Rgb, RgbImage};
use mrface_core::mesh::Vec3;

use crate::compare::{EdmaAnalysis, GpaAnalysis};
use crate::error::{PipelineError, Result};

const SIZE: u32 = 512;
const MARGIN: f64 = 40.0;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GREY: Rgb<u8> = Rgb([150, 150, 150]);
const GROUP_A: Rgb<u8> = Rgb([200, 40, 40]);
const GROUP_B: Rgb<u8> = Rgb([40, 70, 200]);

/// Maps data coordinates into the image with equal x/y scale, y up.
struct Frame {
    lo: [f64; 2],
    scale: f64,
    offset: [f64; 2],
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let scale = (SIZE as f64 - 2.0 * MARGIN) / span;
        let used = [(hi[0] - lo[0]) * scale, (hi[1] - lo[1]) * scale];
        let free = SIZE as f64 - 2.0 * MARGIN;
        Self {
            lo,
            scale,
            offset: [MARGIN + 0.5 * (free - used[0]), MARGIN + 0.5 * (free - used[1])],
        }
    }

    fn px(&self, p: [f64; 2]) -> (i64, i64) {
        let x = self.offset[0] + (p[0] - self.lo[0]) * self.scale;
        let y = self.offset[1] + (p[1] - self.lo[1]) * self.scale;
        (x.round() as i64, (SIZE as f64 - 1.0 - y).round() as i64)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>, width: i64) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        dot(img, x, y, c, width / 2);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn dot(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>, r: i64) {
    for dy in -r..=r {
        for dx in -r..=r {
            put(img, x + dx, y + dy, c);
        }
    }
}

fn encode(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| PipelineError::Input(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

fn polygon(img: &mut RgbImage, f: &Frame, hull: &[[f64; 2]], c: Rgb<u8>) {
    for i in 0..hull.len() {
        line(img, f.px(hull[i]), f.px(hull[(i + 1) % hull.len()]), c, 1);
    }
}

/// PC1 (horizontal) against PC2 with each group's convex hull.
pub fn morphospace_png(g: &GpaAnalysis) -> Result<Vec<u8>> {
    let pts = |rows: &[Vec<f64>]| rows.iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>();
    let (a, b) = (pts(&g.scores.a), pts(&g.scores.b));
    let f = Frame::fit(a.iter().chain(&b).copied());
    let mut img = RgbImage::from_pixel(SIZE, SIZE, WHITE);
    let (ox, oy) = f.px([0.0, 0.0]);
    line(&mut img, (0, oy), (SIZE as i64 - 1, oy), GREY, 1);
    line(&mut img, (ox, 0), (ox, SIZE as i64 - 1), GREY, 1);
    polygon(&mut img, &f, &g.hulls.a, GROUP_A);
    polygon(&mut img, &f, &g.hulls.b, GROUP_B);
    for p in &a {
        let (x, y) = f.px(*p);
        dot(&mut img, x, y, GROUP_A, 3);
    }
    for p in &b {
        let (x, y) = f.px(*p);
        dot(&mut img, x, y, GROUP_B, 3);
    }
    encode(&img)
}

/// Mean configuration projected on its first two principal axes (the
/// Procrustes frame is principal-axes aligned). Top pairs are drawn red where
/// group A is larger and blue where group B is; thickness follows rank.
pub fn edma_plot_png(mean_shape: &[Vec3], e: &EdmaAnalysis) -> Result<Vec<u8>> {
    let pts: Vec<[f64; 2]> = mean_shape.iter().map(|p| [p[0], p[1]]).collect();
    let f = Frame::fit(pts.iter().copied());
    let mut img = RgbImage::from_pixel(SIZE, SIZE, WHITE);
    let n = e.top_pairs.len() as i64;
    for (rank, tp) in e.top_pairs.iter().enumerate().rev() {
        let (l, m) = e.report.pairs[tp.pair];
        let c = if tp.ratio > 1.0 { GROUP_A } else { GROUP_B };
        let width = 1 + 2 * (n - rank as i64) / n.max(1);
        line(&mut img, f.px(pts[l]), f.px(pts[m]), c, width);
    }
    for p in &pts {
        let (x, y) = f.px(*p);
        dot(&mut img, x, y, Rgb([0, 0, 0]), 3);
    }
    encode(&img)
}
