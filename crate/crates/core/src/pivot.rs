//! Pivot calibration of the pointer tip.
//!
//! While the tip rests in a fixed divot the pointer is rotated, and every
//! tracker pose `(R_k, t_k)` of the dynamic reference frame satisfies
//! `R_k c + t_k = c'` for the unknown tip offset `c` (pointer frame) and the
//! unknown pivot point `c'` (tracker/world frame). Stacking all poses gives
//! the `3N × 6` system `[R_k | -I] (c; c') = -t_k`, solved here by Householder
//! QR.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::TrackedSample;
use crate::scalar::{lit, Real};

/// Rotational spread below which the motion is treated as degenerate.
pub const MIN_ROTATION_SPREAD_DEG: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PivotError {
    #[error("pivot calibration needs at least 3 valid samples, got {0}")]
    InsufficientSamples(usize),
    #[error("degenerate pointer motion: {0}")]
    DegenerateMotion(String),
}

/// Physical pointer properties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerSpec {
    /// Diameter of the spherical tip, mm.
    pub tip_sphere_diameter: f64,
}

impl Default for PointerSpec {
    fn default() -> Self {
        Self {
            tip_sphere_diameter: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real + Serialize"))]
pub struct PivotResult<T: Real> {
    /// Tip offset `c` in the pointer frame, mm.
    pub tip_offset: Vector3<T>,
    /// Fixed pivot location `c'` in the tracker frame, mm.
    pub pivot_point: Vector3<T>,
    /// RMS of per-sample residual norms `‖R_k c + t_k - c'‖`, mm.
    pub rms_residual: T,
    pub sample_count: usize,
}

/// Largest geodesic angle (radians) between any two sample rotations.
pub fn rotation_spread<T: Real>(samples: &[&TrackedSample<T>]) -> T {
    let angle = |a: &TrackedSample<T>, b: &TrackedSample<T>| {
        let c = ((a.rotation.transpose() * b.rotation).trace() - T::one()) * lit(0.5);
        let c = if c > T::one() {
            T::one()
        } else if c < -T::one() {
            -T::one()
        } else {
            c
        };
        c.acos()
    };
    let threshold: T = lit(MIN_ROTATION_SPREAD_DEG.to_radians());
    let Some(first) = samples.first() else {
        return T::zero();
    };
    let mut best = T::zero();
    for s in samples.iter().skip(1) {
        let a = angle(first, s);
        if a > best {
            best = a;
        }
    }
    if best > threshold {
        return best;
    }
    // Every sample is close to the first one; the pairwise maximum may still
    // be up to twice as large.
    for (i, a) in samples.iter().enumerate() {
        for b in samples.iter().skip(i + 1) {
            let ang = angle(a, b);
            if ang > best {
                best = ang;
            }
        }
    }
    best
}

/// Least-squares pivot calibration over the valid samples.
pub fn solve_pivot<T: Real>(samples: &[TrackedSample<T>]) -> Result<PivotResult<T>, PivotError> {
    let valid: Vec<&TrackedSample<T>> = samples.iter().filter(|s| s.valid).collect();
    let n = valid.len();
    if n < 3 {
        return Err(PivotError::InsufficientSamples(n));
    }
    let spread = rotation_spread(&valid);
    if spread <= lit(MIN_ROTATION_SPREAD_DEG.to_radians()) {
        return Err(PivotError::DegenerateMotion(format!(
            "rotational spread {:.3}° does not exceed {MIN_ROTATION_SPREAD_DEG}°",
            spread.to_f64().unwrap_or(f64::NAN).to_degrees()
        )));
    }

    let mut a = DMatrix::<T>::zeros(3 * n, 6);
    let mut b = DVector::<T>::zeros(3 * n);
    for (k, s) in valid.iter().enumerate() {
        let row = 3 * k;
        a.fixed_view_mut::<3, 3>(row, 0).copy_from(&s.rotation);
        for i in 0..3 {
            a[(row + i, 3 + i)] = -T::one();
            b[row + i] = -s.translation[i];
        }
    }

    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<T> = (0..6).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().fold(T::zero(), |m, &d| if d > m { d } else { m });
    let min = diag.iter().fold(max, |m, &d| if d < m { d } else { m });
    if max <= T::zero() || min / max < lit(1e-10) {
        return Err(PivotError::DegenerateMotion(
            "stacked system is rank deficient (rotations about a single axis?)".into(),
        ));
    }
    let qtb = qr.q().transpose() * &b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| PivotError::DegenerateMotion("singular triangular factor".into()))?;

    let tip_offset = Vector3::new(x[0], x[1], x[2]);
    let pivot_point = Vector3::new(x[3], x[4], x[5]);
    let mut sum_sq = T::zero();
    for s in &valid {
        sum_sq += (s.rotation * tip_offset + s.translation - pivot_point).norm_squared();
    }
    let rms_residual = (sum_sq / lit(n as f64)).sqrt();

    Ok(PivotResult {
        tip_offset,
        pivot_point,
        rms_residual,
        sample_count: n,
    })
}
