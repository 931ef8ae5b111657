//! The calibrated rig in one place, and the composed tip→pixel chains.

use serde::{Deserialize, Serialize};

use crate::geom::{CameraModel, Frame, GeomError, Pixel, Point3, RigidTransform};
use crate::scalar::Real;

/// Camera and projector intrinsics together with the transforms that link
/// the workspace frame to both sensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + serde::de::DeserializeOwned"
))]
pub struct CalibrationBundle<T: Real> {
    pub camera: CameraModel<T>,
    #[serde(default)]
    pub projector: Option<CameraModel<T>>,
    /// World → camera.
    pub camera_from_world: RigidTransform<T>,
    /// Camera → projector.
    #[serde(default)]
    pub projector_from_camera: Option<RigidTransform<T>>,
    /// Tracker → world, when tracker poses are reported in the tracker's
    /// native frame.
    #[serde(default)]
    pub world_from_tracker: Option<RigidTransform<T>>,
    pub reprojection_rms_px: T,
}

impl<T: Real> CalibrationBundle<T> {
    pub fn new(camera: CameraModel<T>, camera_from_world: RigidTransform<T>) -> Result<Self, GeomError> {
        expect_frames(&camera_from_world, Frame::World, Frame::Camera)?;
        Ok(Self {
            camera,
            projector: None,
            camera_from_world,
            projector_from_camera: None,
            world_from_tracker: None,
            reprojection_rms_px: T::zero(),
        })
    }

    pub fn with_projector(
        mut self,
        projector: CameraModel<T>,
        projector_from_camera: RigidTransform<T>,
    ) -> Result<Self, GeomError> {
        expect_frames(&projector_from_camera, Frame::Camera, Frame::Projector)?;
        self.projector = Some(projector);
        self.projector_from_camera = Some(projector_from_camera);
        Ok(self)
    }

    pub fn has_projector(&self) -> bool {
        self.projector.is_some() && self.projector_from_camera.is_some()
    }

    /// Checks frame labels of every stored transform.
    pub fn validate(&self) -> Result<(), GeomError> {
        self.camera.validate()?;
        expect_frames(&self.camera_from_world, Frame::World, Frame::Camera)?;
        if let Some(t) = &self.projector_from_camera {
            expect_frames(t, Frame::Camera, Frame::Projector)?;
        }
        if let Some(p) = &self.projector {
            p.validate()?;
        }
        if let Some(t) = &self.world_from_tracker {
            expect_frames(t, Frame::Tracker, Frame::World)?;
        }
        Ok(())
    }

    /// World → projector.
    pub fn projector_from_world(&self) -> Result<RigidTransform<T>, GeomError> {
        let bc = self.projector_from_camera.as_ref().ok_or(GeomError::MissingProjector)?;
        bc.compose(&self.camera_from_world)
    }

    /// Camera pixel of the pointer tip given the pointer pose in the world.
    pub fn tip_to_camera_pixel(
        &self,
        world_from_pointer: &RigidTransform<T>,
        tip: &Point3<T>,
    ) -> Result<Pixel<T>, GeomError> {
        let chain = self.camera_from_world.compose(world_from_pointer)?;
        self.camera.project(&chain.transform_point(tip)?)
    }

    /// Projector pixel that illuminates the pointer tip.
    pub fn tip_to_projector_pixel(
        &self,
        world_from_pointer: &RigidTransform<T>,
        tip: &Point3<T>,
    ) -> Result<Pixel<T>, GeomError> {
        let projector = self.projector.as_ref().ok_or(GeomError::MissingProjector)?;
        let bc = self.projector_from_camera.as_ref().ok_or(GeomError::MissingProjector)?;
        let chain = bc.compose(&self.camera_from_world)?.compose(world_from_pointer)?;
        projector.project(&chain.transform_point(tip)?)
    }

    /// Camera pixel of a world point.
    pub fn world_to_camera_pixel(&self, p: &Point3<T>) -> Result<Pixel<T>, GeomError> {
        self.camera.project(&self.camera_from_world.transform_point(p)?)
    }

    /// Projector pixel of a world point.
    pub fn world_to_projector_pixel(&self, p: &Point3<T>) -> Result<Pixel<T>, GeomError> {
        let projector = self.projector.as_ref().ok_or(GeomError::MissingProjector)?;
        projector.project(&self.projector_from_world()?.transform_point(p)?)
    }
}

fn expect_frames<T: Real>(t: &RigidTransform<T>, from: Frame, to: Frame) -> Result<(), GeomError> {
    if t.from_frame() != from {
        return Err(GeomError::FrameMismatch {
            expected: from,
            found: t.from_frame(),
        });
    }
    if t.to_frame() != to {
        return Err(GeomError::FrameMismatch {
            expected: to,
            found: t.to_frame(),
        });
    }
    Ok(())
}
