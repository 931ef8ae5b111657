//! Stage-two data generation: sparse pyramidal optical flow that keeps
//! annotation points attached to the moving object.

mod lk;
mod propagate;
mod pyramid;

pub use lk::{track_points, track_pyramids, LossReason, TrackParams, TrackState, TrackStatus};
pub use propagate::{propagate_annotation, Propagation, MAX_LOST_FRACTION};
pub use pyramid::{Level, Pyramid};

use thiserror::Error;

use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("annotation points lie outside the first frame")]
    AnnotationOutOfFrame,
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("annotation belongs to frame {annotation}, sequence starts at {sequence}")]
    FrameIndexMismatch { annotation: u64, sequence: u64 },
}
