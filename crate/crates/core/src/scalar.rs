use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar used by the geometric core: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Orthonormality tolerance for rotation matrices stored as `T`.
///
/// `1e-9` for `f64`; scaled up with machine epsilon for narrower types.
pub fn rotation_tolerance<T: Real>() -> T {
    let eps_scaled = T::default_epsilon() * lit::<T>(1e3);
    let base = lit::<T>(1e-9);
    if eps_scaled > base {
        eps_scaled
    } else {
        base
    }
}
