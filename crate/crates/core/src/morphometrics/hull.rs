use serde::Serialize;

use crate::{Error, Result};

pub type Point2 = [f64; 2];

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (Andrew's monotone chain), collinear
/// points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Sutherland–Hodgman clip of `subject` by the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorphospaceOverlap {
    pub hull_a: Vec<Point2>,
    pub hull_b: Vec<Point2>,
    pub area_a: f64,
    pub area_b: f64,
    pub intersection: f64,
    pub iou: f64,
}

/// Intersection over union of the convex hulls of two score clouds.
pub fn morphospace_iou(a: &[Point2], b: &[Point2]) -> Result<MorphospaceOverlap> {
    let hull_a = convex_hull(a);
    let hull_b = convex_hull(b);
    let (area_a, area_b) = (polygon_area(&hull_a), polygon_area(&hull_b));
    for (name, h, area) in [("A", &hull_a, area_a), ("B", &hull_b, area_b)] {
        if h.len() < 3 || !(area > 0.0) {
            return Err(Error::DegenerateHull(format!("group {name} hull has zero area")));
        }
    }
    let inter = clip_convex(&hull_a, &hull_b);
    let intersection = if inter.len() >= 3 {
        polygon_area(&inter).max(0.0)
    } else {
        0.0
    };
    let union = area_a + area_b - intersection;
    Ok(MorphospaceOverlap {
        hull_a,
        hull_b,
        area_a,
        area_b,
        intersection,
        iou: (intersection / union).clamp(0.0, 1.0),
    })
}
