//! Software rasterizer for frontal mesh snapshots.

use std::path::Path;

use image::{GrayImage, Luma};
use mrface_core::mesh::{TriMesh, Vec3};

use crate::error::{io_err, PipelineError, Result};

pub const SNAPSHOT_SIZE: u32 = 512;
/// Fraction of the image spanned by the larger projected extent.
const FILL: f64 = 0.9;
const BACKGROUND: u8 = 0;

/// Orthographic view from +y (in front of the face) with z up. Image
/// columns follow +x, so the subject's left appears on the viewer's right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontalCamera {
    pub center: [f64; 2],
    /// Pixels per millimetre.
    pub scale: f64,
}

impl FrontalCamera {
    /// Camera framing the mesh's x-z bounding box.
    pub fn fit(mesh: &TriMesh) -> Option<Self> {
        let (lo, hi) = mesh.bbox()?;
        let extent = (hi[0] - lo[0]).max(hi[2] - lo[2]);
        let scale = if extent > 0.0 { FILL * SNAPSHOT_SIZE as f64 / extent } else { 1.0 };
        Some(Self {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[2] + hi[2])],
            scale,
        })
    }

    /// Continuous pixel coordinates (column, row) of a point.
    pub fn project(&self, p: Vec3) -> [f64; 2] {
        let half = SNAPSHOT_SIZE as f64 / 2.0;
        [
            half + (p[0] - self.center[0]) * self.scale,
            half - (p[2] - self.center[1]) * self.scale,
        ]
    }
}

/// Depth-buffered flat-shaded rendering with a headlight along the view axis.
pub fn render_snapshot(mesh: &TriMesh) -> Result<GrayImage> {
    let cam = FrontalCamera::fit(mesh).ok_or_else(|| PipelineError::Input("cannot snapshot an empty mesh".into()))?;
    if mesh.triangles.is_empty() {
        return Err(PipelineError::Input("cannot snapshot a mesh without triangles".into()));
    }
    let n = SNAPSHOT_SIZE as usize;
    let mut depth = vec![f64::NEG_INFINITY; n * n];
    let mut img = GrayImage::from_pixel(SNAPSHOT_SIZE, SNAPSHOT_SIZE, Luma([BACKGROUND]));
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let normal = mesh.face_normal(t);
        let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
        if len == 0.0 {
            continue;
        }
        // headlight: brightness follows the normal's alignment with the view axis
        let shade = (normal[1] / len).abs();
        let value = (40.0 + 215.0 * shade).round() as u8;
        let p = tri.map(|v| cam.project(v));
        let area = edge(p[0], p[1], p[2]);
        if area == 0.0 {
            continue;
        }
        let xmin = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let xmax = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(n as f64 - 1.0);
        let ymin = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let ymax = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(n as f64 - 1.0);
        if xmax < 0.0 || ymax < 0.0 {
            continue;
        }
        for y in ymin..=ymax as usize {
            for x in xmin..=xmax as usize {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                let w = [edge(p[1], p[2], c) / area, edge(p[2], p[0], c) / area, edge(p[0], p[1], c) / area];
                if w.iter().any(|&b| b < 0.0) {
                    continue;
                }
                let z = w[0] * tri[0][1] + w[1] * tri[1][1] + w[2] * tri[2][1];
                let k = y * n + x;
                if z > depth[k] {
                    depth[k] = z;
                    img.put_pixel(x as u32, y as u32, Luma([value]));
                }
            }
        }
    }
    Ok(img)
}

fn edge(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Encode a snapshot as PNG bytes.
pub fn snapshot_png(mesh: &TriMesh) -> Result<Vec<u8>> {
    let img = render_snapshot(mesh)?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| PipelineError::Input(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn save_snapshot(mesh: &TriMesh, path: &Path) -> Result<()> {
    let png = snapshot_png(mesh)?;
    std::fs::write(path, png).map_err(io_err(path))
}
