use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::bundle::CalibrationBundle;
use crate::geom::{Frame, Pixel, Point3, RigidTransform};
use crate::sample::TrackedSample;

pub const DEFAULT_SIMPLIFY_EPSILON_MM: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub timestamp: f64,
    /// Tip position in the world frame, mm.
    pub tip: Vector3<f64>,
    pub pen_down: bool,
}

/// Time-ordered tip positions of one live annotation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trajectory, checking strictly increasing timestamps and
    /// finite positions.
    pub fn from_points(points: Vec<TrajectoryPoint>) -> Result<Self, AnnotateError> {
        let mut t = Self::new();
        for p in points {
            t.push(p)?;
        }
        Ok(t)
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }

    /// Positions of the pen-down points.
    pub fn pen_down_tips(&self) -> Vec<Vector3<f64>> {
        self.points.iter().filter(|p| p.pen_down).map(|p| p.tip).collect()
    }

    fn check(&self, p: &TrajectoryPoint) -> Result<(), AnnotateError> {
        if !p.timestamp.is_finite() || !p.tip.iter().all(|x| x.is_finite()) {
            return Err(AnnotateError::InvalidSample("non-finite timestamp or position".into()));
        }
        if let Some(last) = self.points.last() {
            if p.timestamp <= last.timestamp {
                return Err(AnnotateError::InvalidSample(format!(
                    "timestamp {} does not follow {}",
                    p.timestamp, last.timestamp
                )));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, p: TrajectoryPoint) -> Result<(), AnnotateError> {
        self.check(&p)?;
        self.points.push(p);
        Ok(())
    }
}

/// Pointer pose in the world frame, honoring a tracker → world transform
/// when the bundle carries one.
fn world_from_pointer(
    sample: &TrackedSample<f64>,
    bundle: &CalibrationBundle<f64>,
) -> Result<RigidTransform<f64>, AnnotateError> {
    match &bundle.world_from_tracker {
        Some(wt) => Ok(wt.compose(&sample.pose(Frame::Tracker)?)?),
        None => Ok(sample.pose(Frame::World)?),
    }
}

/// Appends the tip position of `sample` and returns the projector pixel that
/// lights the tip, for live feedback. The trajectory is left unchanged on
/// error.
pub fn append_sample(
    trajectory: &mut Trajectory,
    sample: &TrackedSample<f64>,
    pen_down: bool,
    bundle: &CalibrationBundle<f64>,
    tip_offset: &Point3<f64>,
) -> Result<Pixel<f64>, AnnotateError> {
    if !sample.valid {
        return Err(AnnotateError::InvalidSample(
            "tracker flagged the sample invalid".into(),
        ));
    }
    if !bundle.has_projector() {
        return Err(AnnotateError::StaleCalibration("no projector calibration".into()));
    }
    let pose = world_from_pointer(sample, bundle)?;
    let tip = pose.transform_point(tip_offset)?;
    let overlay = bundle.tip_to_projector_pixel(&pose, tip_offset)?;
    trajectory.push(TrajectoryPoint {
        timestamp: sample.timestamp,
        tip: tip.coords,
        pen_down,
    })?;
    Ok(overlay)
}

/// Appends a tip position already known in the world frame, e.g. a cursor
/// pixel unprojected onto the table.
pub fn append_world_point(
    trajectory: &mut Trajectory,
    timestamp: f64,
    tip: &Point3<f64>,
    pen_down: bool,
    bundle: &CalibrationBundle<f64>,
) -> Result<Pixel<f64>, AnnotateError> {
    if !bundle.has_projector() {
        return Err(AnnotateError::StaleCalibration("no projector calibration".into()));
    }
    let overlay = bundle.world_to_projector_pixel(tip)?;
    trajectory.push(TrajectoryPoint {
        timestamp,
        tip: tip.coords,
        pen_down,
    })?;
    Ok(overlay)
}

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn douglas_peucker(points: &[Vector3<f64>], epsilon: f64, keep: &mut [bool]) {
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((first, last)) = stack.pop() {
        if last <= first + 1 {
            continue;
        }
        let (mut best, mut best_d) = (first, -1.0);
        for i in first + 1..last {
            let d = segment_distance(&points[i], &points[first], &points[last]);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        if best_d > epsilon {
            keep[best] = true;
            stack.push((first, best));
            stack.push((best, last));
        }
    }
}

/// Trajectory approximation of the pen-down points: consecutive exact
/// duplicates are dropped, then Douglas–Peucker with tolerance `epsilon_mm`
/// keeps the endpoints and every point needed to stay within the tolerance.
/// With `epsilon_mm = 0` only duplicates are removed.
pub fn simplify(trajectory: &Trajectory, epsilon_mm: f64) -> Result<Trajectory, AnnotateError> {
    let down: Vec<&TrajectoryPoint> = trajectory.points.iter().filter(|p| p.pen_down).collect();
    if down.len() < 2 {
        return Err(AnnotateError::TooFewPoints {
            required: 2,
            found: down.len(),
        });
    }
    let mut unique: Vec<TrajectoryPoint> = Vec::with_capacity(down.len());
    for p in down {
        if unique.last().map(|q| q.tip != p.tip).unwrap_or(true) {
            unique.push(*p);
        }
    }
    if epsilon_mm <= 0.0 || unique.len() < 3 {
        return Ok(Trajectory { points: unique });
    }
    let tips: Vec<Vector3<f64>> = unique.iter().map(|p| p.tip).collect();
    let mut keep = vec![false; tips.len()];
    keep[0] = true;
    keep[tips.len() - 1] = true;
    douglas_peucker(&tips, epsilon_mm, &mut keep);
    Ok(Trajectory {
        points: unique
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(p, _)| p)
            .collect(),
    })
}
