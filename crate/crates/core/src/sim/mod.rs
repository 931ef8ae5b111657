//! Synthetic rig for tests and demos: pointer streams with ground truth, a
//! textured part moving on the table seen by the camera, and projector
//! light transport onto planar targets.

mod pointer;
mod render;
mod rig;
mod structured_light;
mod texture;
mod views;

pub use pointer::{
    generate_pivot_samples, generate_pointer_stream, PointerModel, PointerStream, TablePath, SAMPLE_RATE_HZ,
};
pub use render::{object_homography, project_object_point, MotionStep, ObjectPose, Renderer, Scene, SceneConfig};
pub use rig::{NoiseConfig, RigConfig, CAMERA_STANDOFF_MM, PROJECTOR_BASELINE_MM};
pub use structured_light::{
    projector_calibration_views, Checkerboard, Illumination, LitTarget, MapSource, Roi, SimProjectorView, AMBIENT,
    BLACK_ALBEDO, PROJECTOR_GAIN,
};
pub use texture::{Texture, TextureKind, TextureSpec};
pub use views::{planar_views, table_grid_correspondences};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::GeomError;
use crate::projector::ProjectorError;
use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("path point ({x}, {y}) mm lies outside the work area")]
    PathOutOfWorkArea { x: f64, y: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no admissible board pose in {0} attempts")]
    NoBoardPose(usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Projector(#[from] ProjectorError),
}

/// Rig plus scene: everything needed to regenerate a simulated session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub rig: RigConfig,
    #[serde(default)]
    pub scene: SceneConfig,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig::nominal()
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }
}
