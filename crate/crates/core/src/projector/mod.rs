//! Structured-light projector calibration: gray-code patterns and decoding,
//! local homographies around board corners, projector intrinsics and the
//! camera → projector transform.

mod calibrate;
mod decode;
mod gray;

pub use calibrate::{
    calibrate_projector, stereo_extrinsics, ProjectorCalibOptions, ProjectorCalibration, ProjectorView,
    StereoExtrinsics,
};
pub use decode::{
    decode_correspondences, local_homography_corner, CorrespondenceMap, DEFAULT_DECODE_THRESHOLD, DEFAULT_PATCH_RADIUS,
    MIN_PATCH_PIXELS,
};
pub use gray::{bits_to_code, code_bits, gray_decode, gray_encode, Axis, GrayCodeSequence};

use thiserror::Error;

use crate::calib::CalibError;
use crate::geom::GeomError;
use crate::homography::HomographyError;
use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectorError {
    #[error("index {index} does not fit in {bit_count} bits")]
    OutOfRange { index: u32, bit_count: u32 },
    #[error("expected {expected} capture pairs, got {found}")]
    CaptureCount { expected: usize, found: usize },
    #[error("only {found} decodable pixels in patch, need {required}")]
    InsufficientDecodablePixels { found: usize, required: usize },
    #[error("no views shared by camera and projector")]
    NoSharedViews,
    #[error("{0} camera poses but {1} projector poses")]
    PoseCountMismatch(usize, usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Homography(#[from] HomographyError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
