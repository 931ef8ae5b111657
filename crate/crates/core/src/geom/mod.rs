//! Frame-tagged rigid transforms, pinhole projection and the tip-to-pixel
//! mapping chains.
//!
//! Every 3D point and transform carries the id of the frame it lives in, and
//! composition is checked at run time. Lengths are millimetres, image
//! coordinates are pixels with integer values at pixel centres.

mod camera;
mod transform;

pub use camera::{CameraModel, Plane};
pub use transform::RigidTransform;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::scalar::Real;

/// Named coordinate frames of the rig.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Dynamic reference frame rigidly attached to the pointer.
    Pointer,
    /// Native frame of the optical tracking system.
    Tracker,
    /// Workspace frame defined on the table surface.
    World,
    Camera,
    Projector,
    /// Planar calibration target (checkerboard or circle grid).
    Target,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Frame::Pointer => "pointer",
            Frame::Tracker => "tracker",
            Frame::World => "world",
            Frame::Camera => "camera",
            Frame::Projector => "projector",
            Frame::Target => "target",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("viewing ray is parallel to the plane")]
    RayParallelToPlane,
    #[error("rotation is not orthonormal (max deviation {deviation:e})")]
    NotARotation { deviation: f64 },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("calibration bundle has no projector calibration")]
    MissingProjector,
}

/// A 3D point tagged with its frame, in millimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3<T: Real> {
    pub coords: Vector3<T>,
    pub frame: Frame,
}

impl<T: Real> Point3<T> {
    pub fn new(frame: Frame, x: T, y: T, z: T) -> Self {
        Self {
            coords: Vector3::new(x, y, z),
            frame,
        }
    }

    pub fn from_vector(frame: Frame, coords: Vector3<T>) -> Self {
        Self { coords, frame }
    }

    pub fn origin(frame: Frame) -> Self {
        Self::from_vector(frame, Vector3::zeros())
    }

    pub fn x(&self) -> T {
        self.coords.x
    }

    pub fn y(&self) -> T {
        self.coords.y
    }

    pub fn z(&self) -> T {
        self.coords.z
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.coords - other.coords).norm()
    }

    pub(crate) fn expect_frame(&self, frame: Frame) -> Result<(), GeomError> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(GeomError::FrameMismatch {
                expected: frame,
                found: self.frame,
            })
        }
    }
}

/// Image coordinates in pixels. May lie outside the sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pixel<T = f64> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        (du * du + dv * dv).sqrt()
    }
}
