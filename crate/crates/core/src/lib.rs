//! Core of a pointer-based in-situ annotation system.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod bundle;
pub mod calib;
pub mod export;
pub mod flow;
pub mod geom;
pub mod homography;
pub mod lm;
pub mod pivot;
pub mod projector;
pub mod raster;
pub mod sample;
pub mod scalar;
pub mod shape;
pub mod sim;

/// Double-precision aliases used throughout the service and CLI.
pub type Point3d = geom::Point3<f64>;
pub type Transform = geom::RigidTransform<f64>;
pub type Camera = geom::CameraModel<f64>;
pub type Bundle = bundle::CalibrationBundle<f64>;
pub type Sample = sample::TrackedSample<f64>;

/// Single-precision aliases for the scalar-generic geometry.
pub type Point3f = geom::Point3<f32>;
pub type Transform32 = geom::RigidTransform<f32>;
pub type Camera32 = geom::CameraModel<f32>;
