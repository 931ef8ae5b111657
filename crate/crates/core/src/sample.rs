use nalgebra::{Matrix3, Vector3};
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geom::{Frame, GeomError, RigidTransform};
use crate::scalar::Real;

/// One tracker report of the pointer's dynamic reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedSample<T: Real> {
    /// Seconds, monotonic.
    pub timestamp: f64,
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    /// The tracker flags samples as invalid when the marker body is not
    /// fully visible.
    pub valid: bool,
}

impl<T: Real> TrackedSample<T> {
    pub fn from_pose(timestamp: f64, pose: &RigidTransform<T>) -> Self {
        Self {
            timestamp,
            rotation: *pose.rotation(),
            translation: *pose.translation(),
            valid: true,
        }
    }

    pub fn invalid(timestamp: f64) -> Self {
        Self {
            timestamp,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            valid: false,
        }
    }

    /// Pose of the pointer expressed in `reference` (the frame the tracker
    /// reports in). Fails if the rotation is not orthonormal.
    pub fn pose(&self, reference: Frame) -> Result<RigidTransform<T>, GeomError> {
        RigidTransform::new(Frame::Pointer, reference, self.rotation, self.translation)
    }
}

/// Wire form shared by the CLI replay files and the HTTP API.
#[derive(Serialize, Deserialize)]
struct SampleRepr<T> {
    timestamp: f64,
    rotation: [[T; 3]; 3],
    translation: [T; 3],
    #[serde(default = "yes")]
    valid: bool,
}

fn yes() -> bool {
    true
}

impl<T: Real + Serialize> Serialize for TrackedSample<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        SampleRepr {
            timestamp: self.timestamp,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
            valid: self.valid,
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + DeserializeOwned> Deserialize<'de> for TrackedSample<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = SampleRepr::<T>::deserialize(deserializer)?;
        if !r.timestamp.is_finite() {
            return Err(D::Error::custom("non-finite timestamp"));
        }
        let m = r.rotation;
        Ok(Self {
            timestamp: r.timestamp,
            rotation: Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            translation: Vector3::new(r.translation[0], r.translation[1], r.translation[2]),
            valid: r.valid,
        })
    }
}
