use nalgebra::{DMatrix, Matrix3, SVector, Vector3};

use super::reprojection::{IntrinsicsMode, ObservedView, ReprojectionProblem, RigState};
use super::{CalibError, PlanarView};
use crate::geom::{CameraModel, Frame, RigidTransform};
use crate::homography::estimate_homography;
use crate::lm::{levenberg_marquardt, LmOptions, LmReport};

#[derive(Clone, Copy, Debug)]
pub struct ZhangOptions {
    /// Release the four distortion coefficients during refinement.
    pub refine_distortion: bool,
    pub lm: LmOptions,
}

impl Default for ZhangOptions {
    fn default() -> Self {
        Self {
            refine_distortion: true,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntrinsicsCalibration {
    pub camera: CameraModel<f64>,
    /// Target → sensor pose per view.
    pub poses: Vec<RigidTransform<f64>>,
    /// Final RMS reprojection error over all points, px.
    pub rms_px: f64,
    pub report: LmReport,
}

/// Constraint row `v_ij` built from columns `i`, `j` of a homography.
fn v_ij(h: &Matrix3<f64>, i: usize, j: usize) -> SVector<f64, 6> {
    let a = h.column(i);
    let b = h.column(j);
    SVector::<f64, 6>::from_row_slice(&[
        a[0] * b[0],
        a[0] * b[1] + a[1] * b[0],
        a[1] * b[1],
        a[2] * b[0] + a[0] * b[2],
        a[2] * b[1] + a[1] * b[2],
        a[2] * b[2],
    ])
}

/// Pixel conditioning: maps the sensor to roughly `[-1, 1]²`.
fn conditioning(width: u32, height: u32) -> Matrix3<f64> {
    let s = 2.0 / (width as f64 + height as f64);
    Matrix3::new(
        s,
        0.0,
        -s * width as f64 / 2.0,
        0.0,
        s,
        -s * height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    )
}

/// Closed-form K from the absolute-conic constraints of plane homographies
/// (zero skew enforced afterwards, distortion zero).
pub fn closed_form_intrinsics(
    homographies: &[Matrix3<f64>],
    width: u32,
    height: u32,
) -> Result<CameraModel<f64>, CalibError> {
    if homographies.len() < 3 {
        return Err(CalibError::InsufficientViews(homographies.len()));
    }
    let n = conditioning(width, height);
    let m = homographies.len();
    let mut v = DMatrix::<f64>::zeros(2 * m, 6);
    for (k, h) in homographies.iter().enumerate() {
        let hn = n * h;
        let hn = hn / hn.norm();
        v.row_mut(2 * k).copy_from(&v_ij(&hn, 0, 1).transpose());
        v.row_mut(2 * k + 1)
            .copy_from(&(v_ij(&hn, 0, 0) - v_ij(&hn, 1, 1)).transpose());
    }
    let svd = v.svd(false, true);
    let v_t = svd.v_t.ok_or(CalibError::DegenerateOrientations)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    if sv[order[1]] <= 1e-9 * sv[order[order.len() - 1]] {
        return Err(CalibError::DegenerateOrientations);
    }
    let mut b = v_t.row(order[0]).transpose();
    if b[0] < 0.0 {
        b = -b;
    }
    let (b11, b12, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4], b[5]);
    let den = b11 * b22 - b12 * b12;
    if den <= 0.0 || b11 <= 0.0 {
        return Err(CalibError::DegenerateOrientations);
    }
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / den).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;
    if !(alpha.is_finite() && beta.is_finite() && u0.is_finite() && v0.is_finite()) {
        return Err(CalibError::DegenerateOrientations);
    }
    // Undo the conditioning: K = N⁻¹ K'.
    let s = n[(0, 0)];
    let fx = alpha / s;
    let fy = beta / s;
    let cx = (u0 - n[(0, 2)]) / s;
    let cy = (v0 - n[(1, 2)]) / s;
    let w = width as f64;
    let h = height as f64;
    let cx = cx.clamp(0.0, w - 1e-6);
    let cy = cy.clamp(0.0, h - 1e-6);
    Ok(CameraModel::pinhole(fx, fy, cx, cy, width, height)?)
}

/// Target → sensor pose from a plane homography and known K.
pub(crate) fn pose_from_homography(k: &Matrix3<f64>, h: &Matrix3<f64>, to: Frame) -> RigidTransform<f64> {
    let k_inv = k.try_inverse().unwrap_or_else(Matrix3::identity);
    let a = k_inv * h;
    let a1: Vector3<f64> = a.column(0).into();
    let a2: Vector3<f64> = a.column(1).into();
    let a3: Vector3<f64> = a.column(2).into();
    let mut lambda = 2.0 / (a1.norm() + a2.norm());
    if a3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = a1 * lambda;
    let r2 = a2 * lambda;
    let r3 = r1.cross(&r2);
    let r = Matrix3::from_columns(&[r1, r2, r3]);
    RigidTransform::from_approximate_rotation(Frame::Target, to, r, a3 * lambda)
}

/// Camera calibration from views of a planar target: closed-form K, then
/// joint Levenberg–Marquardt refinement of intrinsics, distortion and all
/// view poses.
pub fn calibrate_intrinsics_zhang(
    views: &[PlanarView],
    width: u32,
    height: u32,
    options: &ZhangOptions,
) -> Result<IntrinsicsCalibration, CalibError> {
    calibrate_planar_sensor(views, width, height, Frame::Camera, options)
}

pub(crate) fn calibrate_planar_sensor(
    views: &[PlanarView],
    width: u32,
    height: u32,
    sensor: Frame,
    options: &ZhangOptions,
) -> Result<IntrinsicsCalibration, CalibError> {
    if views.len() < 3 {
        return Err(CalibError::InsufficientViews(views.len()));
    }
    let homographies = views
        .iter()
        .map(|v| estimate_homography(&v.plane_points, &v.image_points))
        .collect::<Result<Vec<_>, _>>()?;
    let init = closed_form_intrinsics(&homographies, width, height)?;
    let k = init.k_matrix();
    let poses: Vec<_> = homographies
        .iter()
        .map(|h| pose_from_homography(&k, h, sensor))
        .collect();

    let observed: Vec<ObservedView> = views
        .iter()
        .map(|v| ObservedView {
            object_points: v.object_points(),
            image_points: v.image_points.clone(),
        })
        .collect();
    let mode = if options.refine_distortion {
        IntrinsicsMode::WithDistortion
    } else {
        IntrinsicsMode::Pinhole
    };
    let problem = ReprojectionProblem { views: &observed, mode };
    let (state, report) = levenberg_marquardt(&problem, RigState { camera: init, poses }, &options.lm)?;
    state.camera.validate()?;
    let n_points: usize = views.iter().map(|v| v.plane_points.len()).sum();
    let rms_px = (report.final_cost / n_points as f64).sqrt();
    Ok(IntrinsicsCalibration {
        camera: state.camera,
        poses: state.poses,
        rms_px,
        report,
    })
}

/// Plane coordinates of an `rows × cols` grid with `spacing` mm pitch.
#[cfg(test)]
pub(crate) fn grid(rows: usize, cols: usize, spacing: f64) -> Vec<nalgebra::Vector2<f64>> {
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| nalgebra::Vector2::new(c as f64 * spacing, r as f64 * spacing)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::reprojection_rms;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> CameraModel<f64> {
        CameraModel::pinhole(2000.0, 2000.0, 1224.0, 1024.0, 2448, 2048).unwrap()
    }

    /// Views of a 9×7 board at ~1000 mm, tilted up to ±30°.
    pub(crate) fn synthetic_views(
        cam: &CameraModel<f64>,
        count: usize,
        noise_px: f64,
        seed: u64,
    ) -> (Vec<PlanarView>, Vec<RigidTransform<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
        let pts = grid(7, 9, 30.0);
        let mut views = Vec::new();
        let mut poses = Vec::new();
        while views.len() < count {
            let axis = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.2..0.2),
            );
            let t = Vector3::new(
                rng.random_range(-160.0..-80.0),
                rng.random_range(-130.0..-50.0),
                rng.random_range(850.0..1150.0),
            );
            let pose = RigidTransform::from_axis_angle(Frame::Target, Frame::Camera, axis, t);
            let image: Vec<Vector2<f64>> = pts
                .iter()
                .map(|p| {
                    let px = cam.project_coords(&pose.apply(&Vector3::new(p.x, p.y, 0.0))).unwrap();
                    let mut q = Vector2::new(px.u, px.v);
                    if noise_px > 0.0 {
                        q += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    }
                    q
                })
                .collect();
            if image
                .iter()
                .all(|q| q.x > 0.0 && q.y > 0.0 && q.x < 2447.0 && q.y < 2047.0)
            {
                views.push(PlanarView::new(pts.clone(), image));
                poses.push(pose);
            }
        }
        (views, poses)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn noiseless_views_recover_intrinsics() {
        let k = truth();
        let (views, _) = synthetic_views(&k, 10, 0.0, 1);
        let cal = calibrate_intrinsics_zhang(&views, 2448, 2048, &ZhangOptions::default()).unwrap();
        assert!(rel(cal.camera.fx, k.fx) < 1e-3);
        assert!(rel(cal.camera.fy, k.fy) < 1e-3);
        assert!(rel(cal.camera.cx, k.cx) < 1e-3);
        assert!(rel(cal.camera.cy, k.cy) < 1e-3);
        assert!(cal.rms_px < 1e-6, "rms {}", cal.rms_px);
        assert!(cal.report.is_monotone());
    }

    #[test]
    fn closed_form_is_exact_without_noise() {
        let k = truth();
        let (views, _) = synthetic_views(&k, 5, 0.0, 2);
        let hs: Vec<_> = views
            .iter()
            .map(|v| estimate_homography(&v.plane_points, &v.image_points).unwrap())
            .collect();
        let init = closed_form_intrinsics(&hs, 2448, 2048).unwrap();
        assert!(rel(init.fx, k.fx) < 1e-6);
        assert!(rel(init.cy, k.cy) < 1e-6);
    }

    #[test]
    fn reported_rms_matches_recomputation() {
        let k = truth();
        let (views, _) = synthetic_views(&k, 6, 0.2, 3);
        let cal = calibrate_intrinsics_zhang(&views, 2448, 2048, &ZhangOptions::default()).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for (v, pose) in views.iter().zip(&cal.poses) {
            sum += reprojection_rms(&cal.camera, pose, v).powi(2) * v.plane_points.len() as f64;
            n += v.plane_points.len();
        }
        assert!(((sum / n as f64).sqrt() - cal.rms_px).abs() < 1e-12);
    }

    #[test]
    fn two_views_are_insufficient() {
        let (views, _) = synthetic_views(&truth(), 2, 0.0, 4);
        assert!(matches!(
            calibrate_intrinsics_zhang(&views, 2448, 2048, &ZhangOptions::default()),
            Err(CalibError::InsufficientViews(2))
        ));
    }

    #[test]
    fn parallel_views_are_degenerate() {
        let k = truth();
        let pts = grid(7, 9, 30.0);
        let rot = Vector3::new(0.1, 0.2, 0.0);
        let views: Vec<_> = (0..4)
            .map(|i| {
                let pose = RigidTransform::from_axis_angle(
                    Frame::Target,
                    Frame::Camera,
                    rot,
                    Vector3::new(-100.0 + 10.0 * i as f64, -80.0, 900.0 + 50.0 * i as f64),
                );
                let img = pts
                    .iter()
                    .map(|p| {
                        let px = k.project_coords(&pose.apply(&Vector3::new(p.x, p.y, 0.0))).unwrap();
                        Vector2::new(px.u, px.v)
                    })
                    .collect();
                PlanarView::new(pts.clone(), img)
            })
            .collect();
        assert!(matches!(
            calibrate_intrinsics_zhang(&views, 2448, 2048, &ZhangOptions::default()),
            Err(CalibError::DegenerateOrientations)
        ));
    }

    #[test]
    fn recovers_distortion() {
        let k = CameraModel::new(
            2000.0,
            2005.0,
            1230.0,
            1010.0,
            [-0.08, 0.03, 0.0005, -0.0003],
            2448,
            2048,
        )
        .unwrap();
        let (views, _) = synthetic_views(&k, 10, 0.0, 5);
        let cal = calibrate_intrinsics_zhang(&views, 2448, 2048, &ZhangOptions::default()).unwrap();
        assert!(rel(cal.camera.fx, k.fx) < 1e-4);
        assert!((cal.camera.k1 - k.k1).abs() < 1e-4);
        assert!(cal.rms_px < 1e-6);
    }
}
