use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::CalibrationBundle;
use crate::geom::{CameraModel, Frame, Plane, RigidTransform};

/// Gaussian noise levels applied by the simulator. All default to values
/// typical of an optical tracker and a machine-vision camera and can be set
/// to zero for exact data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-axis σ on tracked translations, mm.
    pub pose_sigma_mm: f64,
    /// Small-angle σ about each rotation axis of tracked poses, rad.
    pub rotation_sigma_rad: f64,
    /// Per-axis σ on detected board corners, px.
    pub corner_sigma_px: f64,
    /// σ on rendered intensities, 0–255 scale.
    pub intensity_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pose_sigma_mm: 0.1,
            rotation_sigma_rad: 0.0,
            corner_sigma_px: 0.0,
            intensity_sigma: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            pose_sigma_mm: 0.0,
            ..Self::default()
        }
    }
}

/// Simulated camera, projector and table with their true placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub camera: CameraModel<f64>,
    pub projector: CameraModel<f64>,
    /// World → camera.
    pub camera_from_world: RigidTransform<f64>,
    /// Camera → projector.
    pub projector_from_camera: RigidTransform<f64>,
    /// Half extents of the work area around the world origin, mm.
    pub work_area_half: [f64; 2],
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
}

pub const CAMERA_STANDOFF_MM: f64 = 1000.0;
pub const PROJECTOR_BASELINE_MM: f64 = 200.0;

// 12 mm lens on 3.45 µm pixels.
const CAMERA_FOCAL_PX: f64 = 12.0 / 3.45e-3;

impl RigConfig {
    /// 5 MP camera 1 m above the table looking straight down, 1080p
    /// projector 200 mm to its side aimed at the work-area centre.
    pub fn nominal() -> Self {
        let camera =
            CameraModel::pinhole(CAMERA_FOCAL_PX, CAMERA_FOCAL_PX, 1223.5, 1023.5, 2448, 2048).expect("valid camera");
        let projector = CameraModel::pinhole(1800.0, 1800.0, 960.0, 540.0, 1920, 1080).expect("valid projector");
        let flip = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).into_inner();
        let camera_from_world = RigidTransform::new(
            Frame::World,
            Frame::Camera,
            flip,
            Vector3::new(0.0, 0.0, CAMERA_STANDOFF_MM),
        )
        .expect("proper rotation");
        // Projector axes in the camera frame: z points at the world origin.
        let toe_in = (-PROJECTOR_BASELINE_MM).atan2(CAMERA_STANDOFF_MM);
        let camera_from_projector_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), toe_in).into_inner();
        let rot = camera_from_projector_rot.transpose();
        let centre = Vector3::new(PROJECTOR_BASELINE_MM, 0.0, 0.0);
        let projector_from_camera =
            RigidTransform::new(Frame::Camera, Frame::Projector, rot, -(rot * centre)).expect("proper rotation");
        Self {
            camera,
            projector,
            camera_from_world,
            projector_from_camera,
            work_area_half: [250.0, 200.0],
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }

    /// Nominal rig with the camera binned 4×4 (612×512), for fast tests.
    pub fn quarter_resolution() -> Self {
        let mut rig = Self::nominal();
        let c = &rig.camera;
        // Pixel centres sit at integers, so the principal point maps as
        // (c + 0.5) / 4 − 0.5.
        rig.camera = CameraModel::pinhole(
            c.fx / 4.0,
            c.fy / 4.0,
            (c.cx + 0.5) / 4.0 - 0.5,
            (c.cy + 0.5) / 4.0 - 0.5,
            c.width / 4,
            c.height / 4,
        )
        .expect("valid camera");
        rig
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = noise;
        self
    }

    /// The true calibration of the rig.
    pub fn bundle(&self) -> CalibrationBundle<f64> {
        CalibrationBundle::new(self.camera, self.camera_from_world)
            .and_then(|b| b.with_projector(self.projector, self.projector_from_camera))
            .expect("rig frames are consistent")
    }

    pub fn in_work_area(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.work_area_half[0] && y.abs() <= self.work_area_half[1]
    }

    /// The table surface `z = 0` expressed in the camera frame.
    pub fn table_in_camera(&self) -> Plane<f64> {
        let t = &self.camera_from_world;
        Plane::new(Frame::Camera, *t.translation(), t.rotation() * Vector3::z())
    }

    /// Deterministic generator for one independent noise stream.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

pub(crate) mod streams {
    pub const POINTER: u64 = 1;
    pub const PIVOT: u64 = 2;
    pub const BOARD_POSES: u64 = 3;
    pub const CORNERS: u64 = 4;
    pub const MAPS: u64 = 5;
    pub const RENDER: u64 = 1 << 32;
    pub const CAPTURE: u64 = 2 << 32;
}
