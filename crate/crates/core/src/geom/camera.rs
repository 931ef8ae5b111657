use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Frame, GeomError, Pixel, Point3};
use crate::scalar::{lit, Real};

/// Pinhole intrinsics with a four-coefficient Brown distortion model, shared
/// by the camera and by the projector (treated as an inverse camera).
///
/// Distortion acts on normalized coordinates `(x, y) = (X/Z, Y/Z)`:
///
/// ```text
/// r² = x² + y²
/// x_d = x (1 + k1 r² + k2 r⁴) + 2 p1 x y + p2 (r² + 2 x²)
/// y_d = y (1 + k1 r² + k2 r⁴) + p1 (r² + 2 y²) + 2 p2 x y
/// u = fx x_d + cx,  v = fy y_d + cy
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr<T>", into = "CameraRepr<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub k1: T,
    pub k2: T,
    pub p1: T,
    pub p2: T,
    pub width: u32,
    pub height: u32,
}

#[derive(Serialize, Deserialize)]
struct CameraRepr<T> {
    fx: T,
    fy: T,
    cx: T,
    cy: T,
    k1: Option<T>,
    k2: Option<T>,
    p1: Option<T>,
    p2: Option<T>,
    width: u32,
    height: u32,
}

impl<T: Real> TryFrom<CameraRepr<T>> for CameraModel<T> {
    type Error = GeomError;

    fn try_from(r: CameraRepr<T>) -> Result<Self, GeomError> {
        let cam = CameraModel {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            k1: r.k1.unwrap_or_else(T::zero),
            k2: r.k2.unwrap_or_else(T::zero),
            p1: r.p1.unwrap_or_else(T::zero),
            p2: r.p2.unwrap_or_else(T::zero),
            width: r.width,
            height: r.height,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl<T: Real> From<CameraModel<T>> for CameraRepr<T> {
    fn from(c: CameraModel<T>) -> Self {
        CameraRepr {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            k1: Some(c.k1),
            k2: Some(c.k2),
            p1: Some(c.p1),
            p2: Some(c.p2),
            width: c.width,
            height: c.height,
        }
    }
}

/// A plane given by a point on it and a normal, in some frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane<T: Real> {
    pub point: Vector3<T>,
    pub normal: Vector3<T>,
    pub frame: Frame,
}

impl<T: Real> Plane<T> {
    pub fn new(frame: Frame, point: Vector3<T>, normal: Vector3<T>) -> Self {
        Self {
            point,
            normal: normal.normalize(),
            frame,
        }
    }

    pub fn signed_distance(&self, p: &Vector3<T>) -> T {
        self.normal.dot(&(p - self.point))
    }
}

const UNDISTORT_ITERATIONS: usize = 30;

impl<T: Real> CameraModel<T> {
    /// Distortion-free pinhole model.
    pub fn pinhole(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, GeomError> {
        Self::new(fx, fy, cx, cy, [T::zero(); 4], width, height)
    }

    /// `distortion` is `[k1, k2, p1, p2]`.
    pub fn new(fx: T, fy: T, cx: T, cy: T, distortion: [T; 4], width: u32, height: u32) -> Result<Self, GeomError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            k1: distortion[0],
            k2: distortion[1],
            p1: distortion[2],
            p2: distortion[3],
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let vals = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2];
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(GeomError::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidCamera("sensor size must be positive".into()));
        }
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if self.cx < T::zero() || self.cx >= w || self.cy < T::zero() || self.cy >= h {
            return Err(GeomError::InvalidCamera(
                "principal point must lie on the sensor".into(),
            ));
        }
        Ok(())
    }

    pub fn distortion(&self) -> [T; 4] {
        [self.k1, self.k2, self.p1, self.p2]
    }

    pub fn has_distortion(&self) -> bool {
        self.distortion().iter().any(|c| *c != T::zero())
    }

    pub fn without_distortion(&self) -> Self {
        Self {
            k1: T::zero(),
            k2: T::zero(),
            p1: T::zero(),
            p2: T::zero(),
            ..*self
        }
    }

    /// Upper-triangular intrinsic matrix K (no skew).
    pub fn k_matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx,
            T::zero(),
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    /// Same camera observing an image scaled by `factor` (pixel units scale,
    /// distortion stays since it lives in normalized coordinates).
    pub fn scaled(&self, factor: T) -> Self {
        let w = (lit::<T>(self.width as f64) * factor).round();
        let h = (lit::<T>(self.height as f64) * factor).round();
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: w.to_u32().unwrap_or(1).max(1),
            height: h.to_u32().unwrap_or(1).max(1),
            ..*self
        }
    }

    /// Applies lens distortion to normalized coordinates.
    pub fn distort(&self, x: T, y: T) -> (T, T) {
        let two: T = lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + self.k1 * r2 + self.k2 * r2 * r2;
        let xd = x * radial + two * self.p1 * x * y + self.p2 * (r2 + two * x * x);
        let yd = y * radial + self.p1 * (r2 + two * y * y) + two * self.p2 * x * y;
        (xd, yd)
    }

    /// Jacobian of [`Self::distort`] with respect to `(x, y)`.
    pub fn distortion_jacobian(&self, x: T, y: T) -> Matrix2<T> {
        let two: T = lit(2.0);
        let six: T = lit(6.0);
        let r2 = x * x + y * y;
        let radial = T::one() + self.k1 * r2 + self.k2 * r2 * r2;
        let dradial = self.k1 + two * self.k2 * r2; // d radial / d(r²)
        let drx = dradial * two * x;
        let dry = dradial * two * y;
        Matrix2::new(
            radial + x * drx + two * self.p1 * y + six * self.p2 * x,
            x * dry + two * self.p1 * x + two * self.p2 * y,
            y * drx + two * self.p1 * x + two * self.p2 * y,
            radial + y * dry + six * self.p1 * y + two * self.p2 * x,
        )
    }

    /// Inverts [`Self::distort`] with Newton iterations.
    pub fn undistort(&self, xd: T, yd: T) -> (T, T) {
        if !self.has_distortion() {
            return (xd, yd);
        }
        let target = Vector2::new(xd, yd);
        let mut p = target;
        let tol: T = T::default_epsilon() * lit(4.0);
        for _ in 0..UNDISTORT_ITERATIONS {
            let (dx, dy) = self.distort(p.x, p.y);
            let err = Vector2::new(dx, dy) - target;
            if err.amax() <= tol {
                break;
            }
            let jac = self.distortion_jacobian(p.x, p.y);
            match jac.try_inverse() {
                Some(inv) => p -= inv * err,
                None => break,
            }
        }
        (p.x, p.y)
    }

    /// Maps a pixel to undistorted normalized coordinates.
    pub fn normalize_pixel(&self, px: &Pixel<T>) -> (T, T) {
        let xd = (px.u - self.cx) / self.fx;
        let yd = (px.v - self.cy) / self.fy;
        self.undistort(xd, yd)
    }

    /// Maps undistorted normalized coordinates to a pixel.
    pub fn pixel_from_normalized(&self, x: T, y: T) -> Pixel<T> {
        let (xd, yd) = self.distort(x, y);
        Pixel::new(self.fx * xd + self.cx, self.fy * yd + self.cy)
    }

    /// Projects a point expressed in the sensor's own frame (camera or
    /// projector) to pixel coordinates.
    pub fn project(&self, p: &Point3<T>) -> Result<Pixel<T>, GeomError> {
        if p.frame != Frame::Camera && p.frame != Frame::Projector {
            return Err(GeomError::FrameMismatch {
                expected: Frame::Camera,
                found: p.frame,
            });
        }
        self.project_coords(&p.coords)
    }

    /// Projection of raw sensor-frame coordinates.
    pub fn project_coords(&self, c: &Vector3<T>) -> Result<Pixel<T>, GeomError> {
        if !c.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if c.z <= T::zero() {
            return Err(GeomError::BehindCamera {
                z: c.z.to_f64().unwrap_or(f64::NAN),
            });
        }
        let x = c.x / c.z;
        let y = c.y / c.z;
        if !self.has_distortion() {
            return Ok(Pixel::new(self.fx * x + self.cx, self.fy * y + self.cy));
        }
        Ok(self.pixel_from_normalized(x, y))
    }

    /// Intersects the viewing ray through `px` with `plane` (given in the
    /// sensor frame).
    pub fn unproject_to_plane(&self, px: &Pixel<T>, plane: &Plane<T>) -> Result<Point3<T>, GeomError> {
        if plane.frame != Frame::Camera && plane.frame != Frame::Projector {
            return Err(GeomError::FrameMismatch {
                expected: Frame::Camera,
                found: plane.frame,
            });
        }
        if !px.is_finite() {
            return Err(GeomError::NonFinite);
        }
        let (x, y) = self.normalize_pixel(px);
        let ray = Vector3::new(x, y, T::one());
        let denom = plane.normal.dot(&ray);
        if (denom / ray.norm()).abs() <= lit(1e-9) {
            return Err(GeomError::RayParallelToPlane);
        }
        let s = plane.normal.dot(&plane.point) / denom;
        if s <= T::zero() {
            return Err(GeomError::BehindCamera {
                z: s.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Point3::from_vector(plane.frame, ray * s))
    }

    /// Whether a pixel lies on the sensor (pixel centres at integers).
    pub fn contains(&self, px: &Pixel<T>) -> bool {
        let half: T = lit(0.5);
        px.u >= -half
            && px.v >= -half
            && px.u < lit::<T>(self.width as f64) - half
            && px.v < lit::<T>(self.height as f64) - half
    }

    pub fn cast<U: Real>(&self) -> CameraModel<U> {
        let c = |x: T| lit::<U>(x.to_f64().unwrap_or(f64::NAN));
        CameraModel {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            k1: c(self.k1),
            k2: c(self.k2),
            p1: c(self.p1),
            p2: c(self.p2),
            width: self.width,
            height: self.height,
        }
    }
}
