use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

use super::decode::{local_homography_corner, CorrespondenceMap, DEFAULT_PATCH_RADIUS};
use super::ProjectorError;
use crate::calib::{IntrinsicsCalibration, PlanarView, ZhangOptions};
use crate::geom::{Frame, Pixel, RigidTransform};

/// One board placement seen by the camera and lit by the gray-code
/// sequences of both projector axes.
#[derive(Clone, Debug)]
pub struct ProjectorView {
    /// Board corner coordinates on the board plane, mm.
    pub plane_points: Vec<Vector2<f64>>,
    /// Matching camera pixels.
    pub camera_corners: Vec<Vector2<f64>>,
    pub map_u: CorrespondenceMap,
    pub map_v: CorrespondenceMap,
    /// Camera pixel of the maps' top-left entry, for maps cropped to a
    /// window around the board.
    pub map_origin: [u32; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectorCalibOptions {
    pub patch_radius: u32,
    pub zhang: ZhangOptions,
}

impl Default for ProjectorCalibOptions {
    fn default() -> Self {
        Self {
            patch_radius: DEFAULT_PATCH_RADIUS,
            zhang: ZhangOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProjectorCalibration {
    /// Projector intrinsics and board → projector pose per view.
    pub intrinsics: IntrinsicsCalibration,
    /// Corners transferred into the projector, per view.
    pub projector_corners: Vec<Vec<Vector2<f64>>>,
}

/// Treats the projector as an inverse camera: corners are transferred into
/// projector pixels by local homographies and fed to the planar calibration.
pub fn calibrate_projector(
    views: &[ProjectorView],
    width: u32,
    height: u32,
    options: &ProjectorCalibOptions,
) -> Result<ProjectorCalibration, ProjectorError> {
    if views.len() < 3 {
        return Err(crate::calib::CalibError::InsufficientViews(views.len()).into());
    }
    let mut planar = Vec::with_capacity(views.len());
    let mut projector_corners = Vec::with_capacity(views.len());
    for view in views {
        let corners = view
            .camera_corners
            .iter()
            .map(|c| {
                let (ox, oy) = (view.map_origin[0] as f64, view.map_origin[1] as f64);
                local_homography_corner(
                    &Pixel::new(c.x - ox, c.y - oy),
                    &view.map_u,
                    &view.map_v,
                    options.patch_radius,
                )
                .map(|p| Vector2::new(p.u, p.v))
            })
            .collect::<Result<Vec<_>, _>>()?;
        planar.push(PlanarView::new(view.plane_points.clone(), corners.clone()));
        projector_corners.push(corners);
    }
    let intrinsics =
        crate::calib::zhang::calibrate_planar_sensor(&planar, width, height, Frame::Projector, &options.zhang)?;
    Ok(ProjectorCalibration {
        intrinsics,
        projector_corners,
    })
}

#[derive(Clone, Debug)]
pub struct StereoExtrinsics {
    /// Camera → projector.
    pub projector_from_camera: RigidTransform<f64>,
    /// Largest pairwise rotation difference between per-view estimates, rad.
    pub max_rotation_disagreement: f64,
    /// Largest pairwise translation difference, mm.
    pub max_translation_disagreement: f64,
}

/// Camera → projector transform from board poses seen by both sensors.
/// Per-view estimates are averaged: sign-aligned quaternion mean for the
/// rotation, arithmetic mean for the translation.
pub fn stereo_extrinsics(
    camera_poses: &[RigidTransform<f64>],
    projector_poses: &[RigidTransform<f64>],
) -> Result<StereoExtrinsics, ProjectorError> {
    if camera_poses.len() != projector_poses.len() {
        return Err(ProjectorError::PoseCountMismatch(
            camera_poses.len(),
            projector_poses.len(),
        ));
    }
    if camera_poses.is_empty() {
        return Err(ProjectorError::NoSharedViews);
    }
    let per_view = camera_poses
        .iter()
        .zip(projector_poses)
        .map(|(c, b)| b.compose(&c.inverse()))
        .collect::<Result<Vec<_>, _>>()?;
    for t in &per_view {
        if t.from_frame() != Frame::Camera || t.to_frame() != Frame::Projector {
            return Err(crate::geom::GeomError::FrameMismatch {
                expected: Frame::Camera,
                found: t.from_frame(),
            }
            .into());
        }
    }

    let mut max_rot: f64 = 0.0;
    let mut max_trans: f64 = 0.0;
    for (i, a) in per_view.iter().enumerate() {
        for b in &per_view[i + 1..] {
            max_rot = max_rot.max(a.rotation_angle_to(b));
            max_trans = max_trans.max((a.translation() - b.translation()).norm());
        }
    }

    if per_view.len() == 1 {
        return Ok(StereoExtrinsics {
            projector_from_camera: per_view[0],
            max_rotation_disagreement: 0.0,
            max_translation_disagreement: 0.0,
        });
    }

    let reference = per_view[0].unit_quaternion();
    let mut q_sum = Vector3::zeros();
    let mut w_sum = 0.0;
    let mut t_sum = Vector3::zeros();
    for t in &per_view {
        let mut q = *t.unit_quaternion().quaternion();
        if q.dot(reference.quaternion()) < 0.0 {
            q = -q;
        }
        q_sum += q.imag();
        w_sum += q.w;
        t_sum += t.translation();
    }
    let n = per_view.len() as f64;
    let mean = UnitQuaternion::from_quaternion(Quaternion::from_parts(w_sum / n, q_sum / n));
    let projector_from_camera = RigidTransform::new(
        Frame::Camera,
        Frame::Projector,
        mean.to_rotation_matrix().into_inner(),
        t_sum / n,
    )?;
    Ok(StereoExtrinsics {
        projector_from_camera,
        max_rotation_disagreement: max_rot,
        max_translation_disagreement: max_trans,
    })
}
