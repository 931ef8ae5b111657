use nalgebra::{DMatrix, DVector, Matrix2x3, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{CameraModel, RigidTransform};
use crate::lm::LeastSquaresProblem;

/// Observations of a planar target in one image: target-plane coordinates
/// (mm, z = 0 implied) and matching image points (px).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarView {
    pub plane_points: Vec<Vector2<f64>>,
    pub image_points: Vec<Vector2<f64>>,
}

impl PlanarView {
    pub fn new(plane_points: Vec<Vector2<f64>>, image_points: Vec<Vector2<f64>>) -> Self {
        Self {
            plane_points,
            image_points,
        }
    }

    pub(crate) fn object_points(&self) -> Vec<Vector3<f64>> {
        self.plane_points.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect()
    }
}

/// Pixel of a sensor-frame point, its derivative with respect to
/// `(fx, fy, cx, cy, k1, k2, p1, p2)` and with respect to the point.
pub fn project_with_jacobian(
    cam: &CameraModel<f64>,
    pc: &Vector3<f64>,
) -> (Vector2<f64>, SMatrix<f64, 2, 8>, Matrix2x3<f64>) {
    let inv_z = 1.0 / pc.z;
    let x = pc.x * inv_z;
    let y = pc.y * inv_z;
    let (xd, yd) = cam.distort(x, y);
    let r2 = x * x + y * y;
    let r4 = r2 * r2;

    let mut j_intr = SMatrix::<f64, 2, 8>::zeros();
    j_intr[(0, 0)] = xd;
    j_intr[(1, 1)] = yd;
    j_intr[(0, 2)] = 1.0;
    j_intr[(1, 3)] = 1.0;
    j_intr[(0, 4)] = cam.fx * x * r2;
    j_intr[(0, 5)] = cam.fx * x * r4;
    j_intr[(0, 6)] = cam.fx * 2.0 * x * y;
    j_intr[(0, 7)] = cam.fx * (r2 + 2.0 * x * x);
    j_intr[(1, 4)] = cam.fy * y * r2;
    j_intr[(1, 5)] = cam.fy * y * r4;
    j_intr[(1, 6)] = cam.fy * (r2 + 2.0 * y * y);
    j_intr[(1, 7)] = cam.fy * 2.0 * x * y;

    let jd = cam.distortion_jacobian(x, y);
    let j_norm = Matrix2x3::new(inv_z, 0.0, -x * inv_z, 0.0, inv_z, -y * inv_z);
    let mut j_point = jd * j_norm;
    j_point.row_mut(0).scale_mut(cam.fx);
    j_point.row_mut(1).scale_mut(cam.fy);

    (
        Vector2::new(cam.fx * xd + cam.cx, cam.fy * yd + cam.cy),
        j_intr,
        j_point,
    )
}

/// Root-mean-square reprojection error (px) of target points seen under
/// `pose` (target → sensor).
pub fn reprojection_rms(cam: &CameraModel<f64>, pose: &RigidTransform<f64>, view: &PlanarView) -> f64 {
    let mut sum = 0.0;
    for (p, q) in view.plane_points.iter().zip(&view.image_points) {
        let pc = pose.apply(&Vector3::new(p.x, p.y, 0.0));
        let px = cam
            .project_coords(&pc)
            .map(|px| Vector2::new(px.u, px.v))
            .unwrap_or(Vector2::new(f64::INFINITY, f64::INFINITY));
        sum += (px - q).norm_squared();
    }
    (sum / view.plane_points.len().max(1) as f64).sqrt()
}

/// Which camera parameters are free in a refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum IntrinsicsMode {
    Fixed,
    Pinhole,
    WithDistortion,
}

impl IntrinsicsMode {
    fn size(self) -> usize {
        match self {
            IntrinsicsMode::Fixed => 0,
            IntrinsicsMode::Pinhole => 4,
            IntrinsicsMode::WithDistortion => 8,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct RigState {
    pub camera: CameraModel<f64>,
    pub poses: Vec<RigidTransform<f64>>,
}

pub(crate) struct ObservedView {
    pub object_points: Vec<Vector3<f64>>,
    pub image_points: Vec<Vector2<f64>>,
}

/// Joint reprojection error over several views of 3D points.
pub(crate) struct ReprojectionProblem<'a> {
    pub views: &'a [ObservedView],
    pub mode: IntrinsicsMode,
}

/// Residual used for points that end up behind the sensor during a trial
/// step; large enough to reject the step.
const BEHIND_PENALTY: f64 = 1e6;

impl ReprojectionProblem<'_> {
    fn residual_count(&self) -> usize {
        self.views.iter().map(|v| 2 * v.object_points.len()).sum()
    }
}

impl LeastSquaresProblem for ReprojectionProblem<'_> {
    type Params = RigState;

    fn residuals(&self, s: &RigState) -> DVector<f64> {
        let mut r = DVector::zeros(self.residual_count());
        let mut row = 0;
        for (view, pose) in self.views.iter().zip(&s.poses) {
            for (p, q) in view.object_points.iter().zip(&view.image_points) {
                let pc = pose.apply(p);
                if pc.z <= 1e-9 {
                    r[row] = BEHIND_PENALTY;
                    r[row + 1] = BEHIND_PENALTY;
                } else {
                    let px = s.camera.pixel_from_normalized(pc.x / pc.z, pc.y / pc.z);
                    r[row] = px.u - q.x;
                    r[row + 1] = px.v - q.y;
                }
                row += 2;
            }
        }
        r
    }

    fn jacobian(&self, s: &RigState) -> DMatrix<f64> {
        let ni = self.mode.size();
        let cols = ni + 6 * self.views.len();
        let mut j = DMatrix::zeros(self.residual_count(), cols);
        let mut row = 0;
        for (vi, (view, pose)) in self.views.iter().zip(&s.poses).enumerate() {
            let col = ni + 6 * vi;
            for p in &view.object_points {
                let rp = pose.rotation() * p;
                let pc = rp + pose.translation();
                if pc.z > 1e-9 {
                    let (_, j_intr, j_point) = project_with_jacobian(&s.camera, &pc);
                    for c in 0..ni {
                        j[(row, c)] = j_intr[(0, c)];
                        j[(row + 1, c)] = j_intr[(1, c)];
                    }
                    // d(exp(ω)·Rp)/dω = -[Rp]×
                    let skew_neg = nalgebra::Matrix3::new(0.0, rp.z, -rp.y, -rp.z, 0.0, rp.x, rp.y, -rp.x, 0.0);
                    let j_rot = j_point * skew_neg;
                    for k in 0..3 {
                        j[(row, col + k)] = j_rot[(0, k)];
                        j[(row + 1, col + k)] = j_rot[(1, k)];
                        j[(row, col + 3 + k)] = j_point[(0, k)];
                        j[(row + 1, col + 3 + k)] = j_point[(1, k)];
                    }
                }
                row += 2;
            }
        }
        j
    }

    fn retract(&self, s: &RigState, delta: &DVector<f64>) -> RigState {
        let mut camera = s.camera;
        let ni = self.mode.size();
        if ni >= 4 {
            camera.fx += delta[0];
            camera.fy += delta[1];
            camera.cx += delta[2];
            camera.cy += delta[3];
        }
        if ni == 8 {
            camera.k1 += delta[4];
            camera.k2 += delta[5];
            camera.p1 += delta[6];
            camera.p2 += delta[7];
        }
        let poses = s
            .poses
            .iter()
            .enumerate()
            .map(|(vi, pose)| {
                let c = ni + 6 * vi;
                let omega = Vector3::new(delta[c], delta[c + 1], delta[c + 2]);
                let dt = Vector3::new(delta[c + 3], delta[c + 4], delta[c + 5]);
                pose.perturbed(&omega, &dt)
            })
            .collect();
        RigState { camera, poses }
    }
}
