//! Planar shape measures on pixel coordinates.

use geo::{Area, BooleanOps, Coord, LineString, Polygon};

use crate::geom::Pixel;

/// Signed shoelace area; positive for counter-clockwise order in a y-up
/// frame (clockwise on screen).
pub fn signed_area(points: &[Pixel<f64>]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            a.u * b.v - b.u * a.v
        })
        .sum::<f64>()
        * 0.5
}

pub fn polygon_area(points: &[Pixel<f64>]) -> f64 {
    signed_area(points).abs()
}

/// Axis-aligned extent `(min, max)` of a point set.
pub fn bounding_box(points: &[Pixel<f64>]) -> Option<(Pixel<f64>, Pixel<f64>)> {
    let first = points.first()?;
    let init = (*first, *first);
    Some(points.iter().fold(init, |(lo, hi), p| {
        (
            Pixel::new(lo.u.min(p.u), lo.v.min(p.v)),
            Pixel::new(hi.u.max(p.u), hi.v.max(p.v)),
        )
    }))
}

/// The four corners of an axis-aligned box, in order.
pub fn box_corners(min: &Pixel<f64>, max: &Pixel<f64>) -> Vec<Pixel<f64>> {
    vec![*min, Pixel::new(max.u, min.v), *max, Pixel::new(min.u, max.v)]
}

fn to_geo(points: &[Pixel<f64>]) -> Polygon<f64> {
    let ring: Vec<Coord<f64>> = points.iter().map(|p| Coord { x: p.u, y: p.v }).collect();
    Polygon::new(LineString::from(ring), vec![])
}

/// Intersection over union of two simple polygons (any orientation).
pub fn polygon_iou(a: &[Pixel<f64>], b: &[Pixel<f64>]) -> f64 {
    if a.len() < 3 || b.len() < 3 {
        return 0.0;
    }
    let (pa, pb) = (to_geo(a), to_geo(b));
    let inter = pa.intersection(&pb).unsigned_area();
    let union = pa.unsigned_area() + pb.unsigned_area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Intersection over union of two axis-aligned boxes given as `(min, max)`.
pub fn box_iou(a: (Pixel<f64>, Pixel<f64>), b: (Pixel<f64>, Pixel<f64>)) -> f64 {
    let w = (a.1.u.min(b.1.u) - a.0.u.max(b.0.u)).max(0.0);
    let h = (a.1.v.min(b.1.v) - a.0.v.max(b.0.v)).max(0.0);
    let inter = w * h;
    let area = |r: (Pixel<f64>, Pixel<f64>)| (r.1.u - r.0.u).max(0.0) * (r.1.v - r.0.v).max(0.0);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
