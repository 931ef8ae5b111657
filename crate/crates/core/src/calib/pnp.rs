use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::reprojection::{IntrinsicsMode, ObservedView, ReprojectionProblem, RigState};
use super::zhang::pose_from_homography;
use super::CalibError;
use crate::geom::{CameraModel, Frame, Pixel, Point3, RigidTransform};
use crate::homography::estimate_homography;
use crate::lm::{levenberg_marquardt, LmOptions, LmReport};

/// A known 3D point (touched by the pointer) and where the camera sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence3D2D {
    pub world_point: Point3<f64>,
    pub image_point: Pixel<f64>,
}

#[derive(Serialize, Deserialize)]
struct CorrespondenceRepr {
    world: [f64; 3],
    #[serde(default = "world_frame")]
    frame: Frame,
    image: [f64; 2],
}

fn world_frame() -> Frame {
    Frame::World
}

impl Serialize for Correspondence3D2D {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CorrespondenceRepr {
            world: [self.world_point.x(), self.world_point.y(), self.world_point.z()],
            frame: self.world_point.frame,
            image: [self.image_point.u, self.image_point.v],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Correspondence3D2D {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = CorrespondenceRepr::deserialize(d)?;
        Ok(Self {
            world_point: Point3::new(r.frame, r.world[0], r.world[1], r.world[2]),
            image_point: Pixel::new(r.image[0], r.image[1]),
        })
    }
}

#[derive(Clone, Debug)]
pub struct PnpResult {
    /// Maps the frame of the 3D points to the camera frame.
    pub camera_from_world: RigidTransform<f64>,
    pub rms_px: f64,
    pub report: LmReport,
}

/// Centroid and principal axes (columns, ascending spread) of a point set,
/// with the singular values of the centred points.
fn principal_axes(points: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>, Vector3<f64>) {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let axes = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ]);
    let spread = Vector3::new(
        eig.eigenvalues[idx[0]].max(0.0).sqrt(),
        eig.eigenvalues[idx[1]].max(0.0).sqrt(),
        eig.eigenvalues[idx[2]].max(0.0).sqrt(),
    );
    (c, axes, spread)
}

/// Initial pose for coplanar points: homography from in-plane coordinates
/// to normalized image coordinates, decomposed into rotation and translation.
fn planar_init(
    points: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
    centroid: Vector3<f64>,
    axes: &Matrix3<f64>,
    frame: Frame,
) -> Result<RigidTransform<f64>, CalibError> {
    let e1: Vector3<f64> = axes.column(2).into();
    let e2: Vector3<f64> = axes.column(1).into();
    let n = e1.cross(&e2);
    let local: Vec<Vector2<f64>> = points
        .iter()
        .map(|p| {
            let d = p - centroid;
            Vector2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();
    let h = estimate_homography(&local, normalized)?;
    let local_pose = pose_from_homography(&Matrix3::identity(), &h, Frame::Camera);
    // camera = R_cl · (L (p - c)) + t_cl where L stacks the local axes as rows.
    let l = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), n.transpose()]);
    let r = local_pose.rotation() * l;
    let t = local_pose.translation() - r * centroid;
    Ok(RigidTransform::from_approximate_rotation(frame, Frame::Camera, r, t))
}

/// Initial pose for general 3D points from the linear 3×4 projection matrix.
fn dlt_init(
    points: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
    frame: Frame,
) -> Result<RigidTransform<f64>, CalibError> {
    let n = points.len();
    let rows = (2 * n).max(12);
    let mut a = DMatrix::<f64>::zeros(rows, 12);
    for (i, (p, q)) in points.iter().zip(normalized).enumerate() {
        let x = [p.x, p.y, p.z, 1.0];
        for k in 0..4 {
            a[(2 * i, k)] = x[k];
            a[(2 * i, 8 + k)] = -q.x * x[k];
            a[(2 * i + 1, 4 + k)] = x[k];
            a[(2 * i + 1, 8 + k)] = -q.y * x[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| CalibError::DegenerateConfiguration("svd failed".into()))?;
    let sv = &svd.singular_values;
    let min = (0..sv.len()).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap_or(0);
    let p = v_t.row(min);
    let m = Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]);
    let t = Vector3::new(p[3], p[7], p[11]);
    let scale = m.determinant().abs().cbrt();
    if scale <= 0.0 || !scale.is_finite() {
        return Err(CalibError::DegenerateConfiguration(
            "degenerate projection matrix".into(),
        ));
    }
    let sign = if m.determinant() < 0.0 { -1.0 } else { 1.0 };
    let m = m * (sign / scale);
    let t = t * (sign / scale);
    Ok(RigidTransform::from_approximate_rotation(frame, Frame::Camera, m, t))
}

/// Camera pose from 3D↔2D correspondences by minimizing reprojection error
/// with Levenberg–Marquardt, initialised from a planar homography (or a
/// linear DLT when the points are not coplanar).
pub fn solve_pnp(correspondences: &[Correspondence3D2D], cam: &CameraModel<f64>) -> Result<PnpResult, CalibError> {
    solve_pnp_with(correspondences, cam, &LmOptions::default())
}

pub fn solve_pnp_with(
    correspondences: &[Correspondence3D2D],
    cam: &CameraModel<f64>,
    options: &LmOptions,
) -> Result<PnpResult, CalibError> {
    if correspondences.len() < 6 {
        return Err(CalibError::InsufficientCorrespondences(correspondences.len()));
    }
    let frame = correspondences[0].world_point.frame;
    if let Some(c) = correspondences.iter().find(|c| c.world_point.frame != frame) {
        return Err(crate::geom::GeomError::FrameMismatch {
            expected: frame,
            found: c.world_point.frame,
        }
        .into());
    }
    if !correspondences
        .iter()
        .all(|c| c.world_point.is_finite() && c.image_point.is_finite())
    {
        return Err(crate::geom::GeomError::NonFinite.into());
    }
    let points: Vec<Vector3<f64>> = correspondences.iter().map(|c| c.world_point.coords).collect();
    let normalized: Vec<Vector2<f64>> = correspondences
        .iter()
        .map(|c| {
            let (x, y) = cam.normalize_pixel(&c.image_point);
            Vector2::new(x, y)
        })
        .collect();

    let (centroid, axes, spread) = principal_axes(&points);
    if spread[1] <= 1e-9 * spread[2] {
        return Err(CalibError::DegenerateConfiguration("points are collinear".into()));
    }
    let init = if spread[0] <= 1e-6 * spread[2] {
        planar_init(&points, &normalized, centroid, &axes, frame)?
    } else {
        dlt_init(&points, &normalized, frame)?
    };

    let views = [ObservedView {
        object_points: points,
        image_points: correspondences
            .iter()
            .map(|c| Vector2::new(c.image_point.u, c.image_point.v))
            .collect(),
    }];
    let problem = ReprojectionProblem {
        views: &views,
        mode: IntrinsicsMode::Fixed,
    };
    let (state, report) = levenberg_marquardt(
        &problem,
        RigState {
            camera: *cam,
            poses: vec![init],
        },
        options,
    )?;
    let rms_px = (report.final_cost / correspondences.len() as f64).sqrt();
    Ok(PnpResult {
        camera_from_world: state.poses[0],
        rms_px,
        report,
    })
}
