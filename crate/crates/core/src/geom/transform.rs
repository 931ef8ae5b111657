use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Frame, GeomError, Point3};
use crate::scalar::{lit, rotation_tolerance, Real};

/// Rotation plus translation mapping points from `from_frame` to `to_frame`:
/// `p_to = rotation * p_from + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
    from_frame: Frame,
    to_frame: Frame,
}

/// Largest absolute entry of `RᵀR - I`.
fn orthonormality_drift<T: Real>(r: &Matrix3<T>) -> T {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation in the Frobenius sense (polar decomposition).
fn nearest_rotation<T: Real>(r: &Matrix3<T>) -> Matrix3<T> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut rot = u * v_t;
    if rot.determinant() < T::zero() {
        let mut fix = Matrix3::identity();
        fix[(2, 2)] = -T::one();
        rot = u * fix * v_t;
    }
    rot
}

impl<T: Real> RigidTransform<T> {
    /// Builds a transform, rejecting matrices that are not proper rotations
    /// within the orthonormality tolerance.
    pub fn new(
        from_frame: Frame,
        to_frame: Frame,
        rotation: Matrix3<T>,
        translation: Vector3<T>,
    ) -> Result<Self, GeomError> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let tol = rotation_tolerance::<T>();
        let drift = orthonormality_drift(&rotation);
        let det_err = (rotation.determinant() - T::one()).abs();
        if drift > tol || det_err > tol {
            let worst = if drift > det_err { drift } else { det_err };
            return Err(GeomError::NotARotation {
                deviation: worst.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            rotation,
            translation,
            from_frame,
            to_frame,
        })
    }

    /// Projects an arbitrary 3×3 matrix onto the nearest rotation first.
    pub fn from_approximate_rotation(
        from_frame: Frame,
        to_frame: Frame,
        rotation: Matrix3<T>,
        translation: Vector3<T>,
    ) -> Self {
        Self {
            rotation: nearest_rotation(&rotation),
            translation,
            from_frame,
            to_frame,
        }
    }

    pub fn identity(from_frame: Frame, to_frame: Frame) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from_frame,
            to_frame,
        }
    }

    pub fn from_translation(from_frame: Frame, to_frame: Frame, translation: Vector3<T>) -> Self {
        Self {
            translation,
            ..Self::identity(from_frame, to_frame)
        }
    }

    /// Rotation given as an axis-angle vector (radians), then translation.
    pub fn from_axis_angle(
        from_frame: Frame,
        to_frame: Frame,
        axis_angle: Vector3<T>,
        translation: Vector3<T>,
    ) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
            from_frame,
            to_frame,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn from_frame(&self) -> Frame {
        self.from_frame
    }

    pub fn to_frame(&self) -> Frame {
        self.to_frame
    }

    /// Same transform with relabelled frames.
    pub fn with_frames(mut self, from_frame: Frame, to_frame: Frame) -> Self {
        self.from_frame = from_frame;
        self.to_frame = to_frame;
        self
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
            from_frame: self.to_frame,
            to_frame: self.from_frame,
        }
    }

    /// `self ∘ other`: applies `other` first. Requires
    /// `self.from_frame == other.to_frame`.
    pub fn compose(&self, other: &Self) -> Result<Self, GeomError> {
        if self.from_frame != other.to_frame {
            return Err(GeomError::FrameMismatch {
                expected: self.from_frame,
                found: other.to_frame,
            });
        }
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_drift(&rotation) > lit(1e-12) {
            rotation = nearest_rotation(&rotation);
        }
        Ok(Self {
            rotation,
            translation: self.rotation * other.translation + self.translation,
            from_frame: other.from_frame,
            to_frame: self.to_frame,
        })
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Result<Point3<T>, GeomError> {
        p.expect_frame(self.from_frame)?;
        Ok(Point3::from_vector(
            self.to_frame,
            self.rotation * p.coords + self.translation,
        ))
    }

    /// Applies the transform to raw coordinates, skipping the frame check.
    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Geodesic angle (radians) between the rotations of two transforms.
    pub fn rotation_angle_to(&self, other: &Self) -> T {
        let rel = self.rotation.transpose() * other.rotation;
        // atan2 keeps full precision near 0 and π, unlike acos of the trace.
        let s = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm();
        s.atan2(rel.trace() - T::one())
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// Left-multiplicative update: `R ← exp(ω)·R`, `t ← t + δt`.
    pub fn perturbed(&self, omega: &Vector3<T>, delta_t: &Vector3<T>) -> Self {
        let dr = Rotation3::new(*omega).into_inner();
        Self {
            rotation: dr * self.rotation,
            translation: self.translation + delta_t,
            from_frame: self.from_frame,
            to_frame: self.to_frame,
        }
    }

    /// Casts to another scalar type.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|x| lit::<U>(x.to_f64().unwrap_or(f64::NAN))),
            translation: self.translation.map(|x| lit::<U>(x.to_f64().unwrap_or(f64::NAN))),
            from_frame: self.from_frame,
            to_frame: self.to_frame,
        }
    }
}

/// On-disk form: frame names plus row-major rotation.
#[derive(Serialize, Deserialize)]
struct TransformRepr<T> {
    from: Frame,
    to: Frame,
    rotation: [[T; 3]; 3],
    translation: [T; 3],
}

impl<T: Real + Serialize> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        TransformRepr {
            from: self.from_frame,
            to: self.to_frame,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + DeserializeOwned> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TransformRepr::<T>::deserialize(deserializer)?;
        let rows = repr.rotation;
        let rotation = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0], rows[2][1], rows[2][2],
        );
        let t = repr.translation;
        RigidTransform::new(repr.from, repr.to, rotation, Vector3::new(t[0], t[1], t[2])).map_err(D::Error::custom)
    }
}
