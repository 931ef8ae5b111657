//! Camera intrinsics from planar views, world→camera extrinsics by PnP, and
//! the workspace frame defined by a touched circle grid.

mod pnp;
mod reprojection;
mod world_frame;
pub(crate) mod zhang;

pub use pnp::{solve_pnp, Correspondence3D2D, PnpResult};
pub use reprojection::{project_with_jacobian, reprojection_rms, PlanarView};
pub use world_frame::{build_world_frame, touches_for, CircleGridSpec, CircleTouch, WorldFrameFit};
pub use zhang::{calibrate_intrinsics_zhang, closed_form_intrinsics, IntrinsicsCalibration, ZhangOptions};

use thiserror::Error;

use crate::geom::GeomError;
use crate::homography::HomographyError;
use crate::lm::LmError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("need at least 3 views, got {0}")]
    InsufficientViews(usize),
    #[error("view orientations are degenerate (parallel planes)")]
    DegenerateOrientations,
    #[error("need at least 6 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error(transparent)]
    Convergence(#[from] LmError),
    #[error("touched points are not planar (max residual {residual_mm:.3} mm)")]
    NonPlanarTouches { residual_mm: f64 },
    #[error("need touches on at least 6 grid circles, got {0}")]
    InsufficientTouches(usize),
    #[error("invalid circle grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

impl From<HomographyError> for CalibError {
    fn from(e: HomographyError) -> Self {
        match e {
            HomographyError::DegenerateConfiguration(m) => CalibError::DegenerateConfiguration(m),
        }
    }
}
