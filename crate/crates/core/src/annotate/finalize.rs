use super::{AnnotateError, Annotation, ShapeKind, Trajectory};
use crate::bundle::CalibrationBundle;
use crate::geom::{Frame, Pixel, Plane, Point3};
use crate::shape::bounding_box;

/// A polygon whose end lies within this distance of its start is closed.
pub const AUTO_CLOSE_GAP_MM: f64 = 5.0;
/// Tip height above the table beyond which the pointer is considered lifted
/// out of the camera's view of the object.
pub const LIFT_THRESHOLD_MM: f64 = 50.0;

/// Projects the pen-down points of a (simplified) trajectory into the camera
/// image and builds a shape of the requested kind.
pub fn finalize_shape(
    trajectory: &Trajectory,
    kind: ShapeKind,
    bundle: &CalibrationBundle<f64>,
    label: &str,
    frame_index: u64,
    id: u64,
) -> Result<Annotation, AnnotateError> {
    let mut tips = trajectory.pen_down_tips();
    if tips.is_empty() {
        return Err(AnnotateError::EmptyTrajectory);
    }
    if kind == ShapeKind::Polygon {
        if tips.len() < 3 {
            return Err(AnnotateError::TooFewPoints {
                required: 3,
                found: tips.len(),
            });
        }
        let gap = (tips[tips.len() - 1] - tips[0]).norm();
        if gap > AUTO_CLOSE_GAP_MM {
            return Err(AnnotateError::OpenContour { gap_mm: gap });
        }
        tips.pop();
    }
    let pixels = tips
        .iter()
        .map(|t| bundle.world_to_camera_pixel(&Point3::from_vector(Frame::World, *t)))
        .collect::<Result<Vec<Pixel<f64>>, _>>()?;
    let points = match kind {
        ShapeKind::Bbox => {
            let (lo, hi) = bounding_box(&pixels).expect("non-empty");
            vec![lo, hi]
        }
        ShapeKind::Polygon | ShapeKind::Polyline => pixels,
    };
    Annotation::new(id, label, kind, points, frame_index)
}

/// Whether the pointer cannot occlude the object: the tip is outside the
/// camera frustum or lifted more than [`LIFT_THRESHOLD_MM`] above the table.
pub fn detect_occlusion_free(tip_world: &Point3<f64>, bundle: &CalibrationBundle<f64>, table: &Plane<f64>) -> bool {
    if table.signed_distance(&tip_world.coords) > LIFT_THRESHOLD_MM {
        return true;
    }
    match bundle.world_to_camera_pixel(tip_world) {
        Ok(px) => !bundle.camera.contains(&px),
        Err(_) => true,
    }
}

/// Most recent frame whose exposure window saw only occlusion-free tip
/// positions. `frames` yields `(frame_index, tips during exposure)`.
pub fn select_reference_frame<'a>(
    frames: impl IntoIterator<Item = (u64, &'a [Point3<f64>])>,
    bundle: &CalibrationBundle<f64>,
    table: &Plane<f64>,
) -> Option<u64> {
    frames
        .into_iter()
        .filter(|(_, tips)| tips.iter().all(|t| detect_occlusion_free(t, bundle, table)))
        .map(|(i, _)| i)
        .max()
}
