use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::rig::RigConfig;
use super::structured_light::Checkerboard;
use super::SimError;
use crate::calib::{Correspondence3D2D, PlanarView};
use crate::geom::{CameraModel, Frame, Pixel, Point3, RigidTransform};

const MAX_ATTEMPTS: usize = 10_000;

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>, SimError> {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .map(Some)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    } else {
        Ok(None)
    }
}

/// Board views for intrinsic calibration: `count` poses about 1 m in front
/// of `camera`, tilted up to ~30°, each with every corner on the sensor.
/// Returns the views (corners with `noise_px` Gaussian noise) and the true
/// target → camera poses.
pub fn planar_views(
    camera: &CameraModel<f64>,
    board: &Checkerboard,
    count: usize,
    noise_px: f64,
    seed: u64,
) -> Result<(Vec<PlanarView>, Vec<RigidTransform<f64>>), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = gaussian(noise_px)?;
    let corners = board.corners();
    let c = board.centre();
    let (w, h) = (camera.width as f64, camera.height as f64);
    let mut views = Vec::with_capacity(count);
    let mut poses = Vec::with_capacity(count);
    let mut attempts = 0;
    while views.len() < count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SimError::NoBoardPose(MAX_ATTEMPTS));
        }
        let axis = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.2..0.2),
        );
        let rot = nalgebra::Rotation3::new(axis).into_inner();
        let centre = Vector3::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(850.0..1150.0),
        );
        let pose = RigidTransform::new(
            Frame::Target,
            Frame::Camera,
            rot,
            centre - rot * Vector3::new(c.x, c.y, 0.0),
        )?;
        let mut image = Vec::with_capacity(corners.len());
        for q in &corners {
            let p = camera.project_coords(&pose.apply(&Vector3::new(q.x, q.y, 0.0)))?;
            let mut v = Vector2::new(p.u, p.v);
            if let Some(n) = &noise {
                v += Vector2::new(n.sample(&mut rng), n.sample(&mut rng));
            }
            image.push(v);
        }
        if image
            .iter()
            .all(|v| v.x >= 0.0 && v.y >= 0.0 && v.x <= w - 1.0 && v.y <= h - 1.0)
        {
            views.push(PlanarView::new(corners.clone(), image));
            poses.push(pose);
        }
    }
    Ok((views, poses))
}

/// World points of a `rows × cols` grid on the table, centred on the origin,
/// paired with their camera pixels under the rig's true pose plus
/// `noise_px` Gaussian noise.
pub fn table_grid_correspondences(
    rig: &RigConfig,
    rows: u32,
    cols: u32,
    spacing_mm: f64,
    noise_px: f64,
    seed: u64,
) -> Result<Vec<Correspondence3D2D>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = gaussian(noise_px)?;
    let bundle = rig.bundle();
    let (ox, oy) = (
        (cols - 1) as f64 * spacing_mm / 2.0,
        (rows - 1) as f64 * spacing_mm / 2.0,
    );
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let p = Point3::new(
                Frame::World,
                c as f64 * spacing_mm - ox,
                r as f64 * spacing_mm - oy,
                0.0,
            );
            let mut px = bundle.world_to_camera_pixel(&p)?;
            if let Some(n) = &noise {
                px = Pixel::new(px.u + n.sample(&mut rng), px.v + n.sample(&mut rng));
            }
            out.push(Correspondence3D2D {
                world_point: p,
                image_point: px,
            });
        }
    }
    Ok(out)
}
