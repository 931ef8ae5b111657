use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;

use insitu_core::bundle::CalibrationBundle;
use insitu_core::calib::{
    build_world_frame, calibrate_intrinsics_zhang, solve_pnp, CircleGridSpec, CircleTouch, Correspondence3D2D,
    PlanarView, ZhangOptions,
};
use insitu_core::geom::{Frame, Pixel, Point3, RigidTransform};
use insitu_core::pivot::{solve_pivot, PivotResult};
use insitu_core::projector::{calibrate_projector, stereo_extrinsics, ProjectorCalibOptions};

use crate::capture_dir::{load_views, read_scene};
use crate::{read_json, write_json};

/// Input of `calibrate intrinsics`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsInput {
    pub width: u32,
    pub height: u32,
    pub views: Vec<PlanarView>,
}

/// Circle-grid touches that define the world frame.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchInput {
    pub grid: CircleGridSpec,
    pub touches: Vec<CircleTouch>,
}

fn zhang_options(pinhole: bool) -> ZhangOptions {
    ZhangOptions {
        refine_distortion: !pinhole,
        ..ZhangOptions::default()
    }
}

pub fn pivot(samples: &Path, out: &Path) -> anyhow::Result<PivotResult<f64>> {
    let file = std::fs::File::open(samples).with_context(|| format!("opening {}", samples.display()))?;
    let samples = crate::pivot_csv::read_samples(file)?;
    let result = solve_pivot(&samples)?;
    write_json(out, &result)?;
    Ok(result)
}

pub fn intrinsics(
    views: &Path,
    bundle: Option<&Path>,
    out: &Path,
    pinhole: bool,
) -> anyhow::Result<CalibrationBundle<f64>> {
    let input: IntrinsicsInput = read_json(views)?;
    let cal = calibrate_intrinsics_zhang(&input.views, input.width, input.height, &zhang_options(pinhole))?;
    let mut b = match bundle {
        Some(p) => {
            let mut b: CalibrationBundle<f64> = read_json(p)?;
            b.camera = cal.camera;
            b
        }
        // The world pose is a placeholder until `calibrate extrinsics`.
        None => CalibrationBundle::new(cal.camera, RigidTransform::identity(Frame::World, Frame::Camera))?,
    };
    b.reprojection_rms_px = cal.rms_px;
    write_json(out, &b)?;
    Ok(b)
}

pub fn extrinsics(
    bundle: &Path,
    correspondences: &Path,
    touches: Option<&Path>,
    out: &Path,
) -> anyhow::Result<CalibrationBundle<f64>> {
    let mut b: CalibrationBundle<f64> = read_json(bundle)?;
    let corr: Vec<Correspondence3D2D> = read_json(correspondences)?;
    if let Some(c) = corr.iter().find(|c| c.world_point.frame != Frame::World) {
        bail!(
            "correspondences must be given in the world frame, found {:?}",
            c.world_point.frame
        );
    }
    let pnp = solve_pnp(&corr, &b.camera)?;
    b.camera_from_world = pnp.camera_from_world;
    b.reprojection_rms_px = pnp.rms_px;
    if let Some(t) = touches {
        let input: TouchInput = read_json(t)?;
        b.world_from_tracker = Some(build_world_frame(&input.grid, &input.touches)?.world_from_tracker);
    }
    b.validate()?;
    write_json(out, &b)?;
    Ok(b)
}

pub struct ProjectorSummary {
    pub bundle: CalibrationBundle<f64>,
    pub rms_px: f64,
    pub views: usize,
}

/// Projector intrinsics and camera → projector pose from a capture
/// directory. Board poses in the camera come from PnP against the bundle's
/// camera intrinsics.
pub fn projector(
    captures: &Path,
    bundle: &Path,
    out: &Path,
    threshold: u8,
    pinhole: bool,
) -> anyhow::Result<ProjectorSummary> {
    let b: CalibrationBundle<f64> = read_json(bundle)?;
    let scene = read_scene(captures)?;
    let views = load_views(captures, &scene, threshold)?;
    let camera_poses = views
        .iter()
        .map(|v| {
            let corr: Vec<Correspondence3D2D> = v
                .plane_points
                .iter()
                .zip(&v.camera_corners)
                .map(|(q, c)| Correspondence3D2D {
                    world_point: Point3::new(Frame::Target, q.x, q.y, 0.0),
                    image_point: Pixel::new(c.x, c.y),
                })
                .collect();
            Ok(solve_pnp(&corr, &b.camera)?.camera_from_world)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let options = ProjectorCalibOptions {
        zhang: zhang_options(pinhole),
        ..ProjectorCalibOptions::default()
    };
    let proj = calibrate_projector(&views, scene.projector_width, scene.projector_height, &options)?;
    let stereo = stereo_extrinsics(&camera_poses, &proj.intrinsics.poses)?;
    let b = b.with_projector(proj.intrinsics.camera, stereo.projector_from_camera)?;
    write_json(out, &b)?;
    Ok(ProjectorSummary {
        bundle: b,
        rms_px: proj.intrinsics.rms_px,
        views: views.len(),
    })
}
