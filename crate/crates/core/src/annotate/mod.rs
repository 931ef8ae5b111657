//! Stage-one annotation: pointer trajectories on the stationary object,
//! trajectory approximation and conversion into image-space shapes.

mod finalize;
mod trajectory;

pub use finalize::{
    detect_occlusion_free, finalize_shape, select_reference_frame, AUTO_CLOSE_GAP_MM, LIFT_THRESHOLD_MM,
};
pub use trajectory::{
    append_sample, append_world_point, simplify, Trajectory, TrajectoryPoint, DEFAULT_SIMPLIFY_EPSILON_MM,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, Pixel};
use crate::shape::bounding_box;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotateError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("calibration bundle is incomplete: {0}")]
    StaleCalibration(String),
    #[error("need at least {required} points, got {found}")]
    TooFewPoints { required: usize, found: usize },
    #[error("contour is open: end is {gap_mm:.1} mm from start")]
    OpenContour { gap_mm: f64 },
    #[error("trajectory has no pen-down points")]
    EmptyTrajectory,
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Bbox,
    Polygon,
    Polyline,
}

impl ShapeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Bbox => "bbox",
            ShapeKind::Polygon => "polygon",
            ShapeKind::Polyline => "polyline",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbox" | "box" => Ok(ShapeKind::Bbox),
            "polygon" => Ok(ShapeKind::Polygon),
            "polyline" => Ok(ShapeKind::Polyline),
            other => Err(format!("unknown shape kind `{other}`")),
        }
    }
}

/// A labeled shape in camera pixel coordinates of frame `frame_index`.
/// Boxes hold `[min, max]`; polygons are implicitly closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub label: String,
    pub kind: ShapeKind,
    pub points: Vec<Pixel<f64>>,
    pub frame_index: u64,
}

impl Annotation {
    pub fn new(
        id: u64,
        label: impl Into<String>,
        kind: ShapeKind,
        points: Vec<Pixel<f64>>,
        frame_index: u64,
    ) -> Result<Self, AnnotateError> {
        let a = Self {
            id,
            label: label.into(),
            kind,
            points,
            frame_index,
        };
        a.validate()?;
        Ok(a)
    }

    /// Box from two opposite corners in any order.
    pub fn bbox_from_corners(
        id: u64,
        label: impl Into<String>,
        a: Pixel<f64>,
        b: Pixel<f64>,
        frame_index: u64,
    ) -> Result<Self, AnnotateError> {
        let (lo, hi) = bounding_box(&[a, b]).expect("two points");
        Self::new(id, label, ShapeKind::Bbox, vec![lo, hi], frame_index)
    }

    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !self.points.iter().all(|p| p.is_finite()) {
            return Err(GeomError::NonFinite.into());
        }
        let required = match self.kind {
            ShapeKind::Bbox => 2,
            ShapeKind::Polygon => 3,
            ShapeKind::Polyline => 2,
        };
        if self.points.len() < required || (self.kind == ShapeKind::Bbox && self.points.len() != 2) {
            return Err(AnnotateError::TooFewPoints {
                required,
                found: self.points.len(),
            });
        }
        if self.kind == ShapeKind::Bbox {
            let (lo, hi) = (self.points[0], self.points[1]);
            if !(lo.u < hi.u && lo.v < hi.v) {
                return Err(AnnotateError::DegenerateShape(
                    "box needs min < max on both axes".into(),
                ));
            }
        }
        Ok(())
    }

    /// Axis-aligned extent of the shape.
    pub fn extent(&self) -> (Pixel<f64>, Pixel<f64>) {
        bounding_box(&self.points).unwrap_or((Pixel::new(0.0, 0.0), Pixel::new(0.0, 0.0)))
    }

    /// Outline as a closed ring (box corners for boxes).
    pub fn outline(&self) -> Vec<Pixel<f64>> {
        match self.kind {
            ShapeKind::Bbox => crate::shape::box_corners(&self.points[0], &self.points[1]),
            _ => self.points.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_invariants() {
        let a = Annotation::bbox_from_corners(1, "scratch", Pixel::new(30.0, 5.0), Pixel::new(10.0, 25.0), 0).unwrap();
        assert_eq!(a.points, vec![Pixel::new(10.0, 5.0), Pixel::new(30.0, 25.0)]);
        assert!(Annotation::bbox_from_corners(1, "x", Pixel::new(3.0, 5.0), Pixel::new(3.0, 9.0), 0).is_err());
        assert!(Annotation::new(1, "x", ShapeKind::Polygon, vec![Pixel::new(0.0, 0.0); 2], 0).is_err());
    }

    #[test]
    fn kind_serde_tags() {
        assert_eq!(serde_json::to_string(&ShapeKind::Polyline).unwrap(), "\"polyline\"");
        assert_eq!("bbox".parse::<ShapeKind>().unwrap(), ShapeKind::Bbox);
        assert!("circle".parse::<ShapeKind>().is_err());
    }
}
