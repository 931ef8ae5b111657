use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rig::{streams, RigConfig};
use super::SimError;
use crate::geom::{Frame, RigidTransform};
use crate::sample::TrackedSample;

pub const SAMPLE_RATE_HZ: f64 = 60.0;

/// Parametric tip path on the table surface, world millimetres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TablePath {
    /// Straight segments through consecutive vertices.
    Polyline {
        vertices: Vec<[f64; 2]>,
    },
    Circle {
        center: [f64; 2],
        radius: f64,
    },
}

impl TablePath {
    /// Closed rectangle traced counter-clockwise from `min`.
    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Self {
        TablePath::Polyline {
            vertices: vec![min, [max[0], min[1]], max, [min[0], max[1]], min],
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            TablePath::Polyline { vertices } => vertices
                .windows(2)
                .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
                .sum(),
            TablePath::Circle { radius, .. } => 2.0 * std::f64::consts::PI * radius,
        }
    }

    /// Point at arc length `s`, clamped to the path.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match self {
            TablePath::Polyline { vertices } => {
                let mut left = s.max(0.0);
                for w in vertices.windows(2) {
                    let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                    if left <= len && len > 0.0 {
                        let f = left / len;
                        return [w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])];
                    }
                    left -= len;
                }
                vertices.last().copied().unwrap_or([0.0, 0.0])
            }
            TablePath::Circle { center, radius } => {
                let a = s.clamp(0.0, self.length()) / radius;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    fn check(&self, rig: &RigConfig) -> Result<(), SimError> {
        let probes: Vec<[f64; 2]> = match self {
            TablePath::Polyline { vertices } => {
                if vertices.is_empty() {
                    return Err(SimError::InvalidConfig("path has no vertices".into()));
                }
                vertices.clone()
            }
            TablePath::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(SimError::InvalidConfig("circle radius must be positive".into()));
                }
                vec![
                    [center[0] - radius, center[1] - radius],
                    [center[0] + radius, center[1] + radius],
                ]
            }
        };
        // The work area is convex, so checking vertices (or the circle's
        // bounding box corners) covers the whole path.
        for [x, y] in probes {
            if !x.is_finite() || !y.is_finite() || !rig.in_work_area(x, y) {
                return Err(SimError::PathOutOfWorkArea { x, y });
            }
        }
        Ok(())
    }
}

/// Geometry and hand motion of the simulated pointer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointerModel {
    /// Tip position in the pointer frame, mm.
    pub tip_offset: [f64; 3],
    /// Tilt of the pointer away from vertical, degrees.
    pub tilt_deg: f64,
    /// Amplitude of the slow heading oscillation, degrees.
    pub heading_amplitude_deg: f64,
    pub heading_period_s: f64,
}

impl Default for PointerModel {
    fn default() -> Self {
        Self {
            tip_offset: [0.0, 0.0, -150.0],
            tilt_deg: 20.0,
            heading_amplitude_deg: 15.0,
            heading_period_s: 4.0,
        }
    }
}

impl PointerModel {
    pub fn tip(&self) -> Vector3<f64> {
        Vector3::from(self.tip_offset)
    }

    /// Pointer → world pose placing the tip at `tip_world` with the given
    /// heading (rotation about the table normal, radians).
    pub fn pose_for_tip(&self, tip_world: &Vector3<f64>, heading: f64) -> RigidTransform<f64> {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), heading)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.tilt_deg.to_radians());
        let rot = rot.into_inner();
        RigidTransform::new(Frame::Pointer, Frame::World, rot, tip_world - rot * self.tip()).expect("proper rotation")
    }

    fn heading_at(&self, t: f64) -> f64 {
        if self.heading_period_s <= 0.0 {
            return 0.0;
        }
        self.heading_amplitude_deg.to_radians() * (2.0 * std::f64::consts::PI * t / self.heading_period_s).sin()
    }
}

/// A simulated tracker stream with the ground truth it was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerStream {
    /// Noisy tracker reports in the world frame.
    pub samples: Vec<TrackedSample<f64>>,
    /// Exact pointer → world pose per sample.
    pub true_poses: Vec<RigidTransform<f64>>,
    /// Exact tip position per sample, world mm.
    pub true_tips: Vec<Vector3<f64>>,
}

/// Tracker reports at 60 Hz of a pointer whose tip moves along `path` on the
/// table at constant `speed_mm_s`.
pub fn generate_pointer_stream(
    rig: &RigConfig,
    path: &TablePath,
    speed_mm_s: f64,
    pointer: &PointerModel,
) -> Result<PointerStream, SimError> {
    if !(speed_mm_s > 0.0 && speed_mm_s.is_finite()) {
        return Err(SimError::InvalidConfig("speed must be positive".into()));
    }
    path.check(rig)?;
    let duration = path.length() / speed_mm_s;
    let n = (duration * SAMPLE_RATE_HZ).floor() as usize + 1;
    let mut rng = rig.rng(streams::POINTER);
    let mut out = PointerStream {
        samples: Vec::with_capacity(n),
        true_poses: Vec::with_capacity(n),
        true_tips: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = i as f64 / SAMPLE_RATE_HZ;
        let [x, y] = path.point_at(speed_mm_s * t);
        let tip = Vector3::new(x, y, 0.0);
        let pose = pointer.pose_for_tip(&tip, pointer.heading_at(t));
        out.samples.push(noisy_sample(t, &pose, rig, &mut rng));
        out.true_poses.push(pose);
        out.true_tips.push(tip);
    }
    Ok(out)
}

/// Tracker reports of the pointer pivoting with its tip held in a divot at
/// `pivot` (world mm): headings cover the full circle and tilts range from
/// 10° to 45°.
pub fn generate_pivot_samples(
    rig: &RigConfig,
    pivot: &Vector3<f64>,
    pointer: &PointerModel,
    count: usize,
) -> PointerStream {
    let mut rng = rig.rng(streams::PIVOT);
    let mut out = PointerStream {
        samples: Vec::with_capacity(count),
        true_poses: Vec::with_capacity(count),
        true_tips: Vec::with_capacity(count),
    };
    for i in 0..count {
        let heading = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let tilt: f64 = rng.random_range(10.0..45.0);
        let model = PointerModel {
            tilt_deg: tilt,
            ..*pointer
        };
        let pose = model.pose_for_tip(pivot, heading);
        let t = i as f64 / SAMPLE_RATE_HZ;
        out.samples.push(noisy_sample(t, &pose, rig, &mut rng));
        out.true_poses.push(pose);
        out.true_tips.push(*pivot);
    }
    out
}

fn noisy_sample(t: f64, pose: &RigidTransform<f64>, rig: &RigConfig, rng: &mut impl Rng) -> TrackedSample<f64> {
    let gauss = |sigma: f64, rng: &mut dyn rand::RngCore| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let (ps, rs) = (rig.noise.pose_sigma_mm, rig.noise.rotation_sigma_rad);
    let dt = Vector3::new(gauss(ps, rng), gauss(ps, rng), gauss(ps, rng));
    let omega = Vector3::new(gauss(rs, rng), gauss(rs, rng), gauss(rs, rng));
    TrackedSample::from_pose(t, &pose.perturbed(&omega, &dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> RigConfig {
        RigConfig::nominal().with_noise(super::super::NoiseConfig::none())
    }

    #[test]
    fn path_outside_work_area_is_rejected() {
        let path = TablePath::Polyline {
            vertices: vec![[0.0, 0.0], [300.0, 0.0]],
        };
        let e = generate_pointer_stream(&exact(), &path, 50.0, &PointerModel::default()).unwrap_err();
        assert_eq!(e, SimError::PathOutOfWorkArea { x: 300.0, y: 0.0 });
        let circle = TablePath::Circle {
            center: [0.0, 150.0],
            radius: 60.0,
        };
        assert!(generate_pointer_stream(&exact(), &circle, 50.0, &PointerModel::default()).is_err());
    }

    #[test]
    fn exact_stream_puts_tip_on_path() {
        let path = TablePath::rectangle([-50.0, -30.0], [50.0, 30.0]);
        let pointer = PointerModel::default();
        let s = generate_pointer_stream(&exact(), &path, 100.0, &pointer).unwrap();
        assert_eq!(s.samples.len(), (3.2f64 * 60.0).floor() as usize + 1);
        for (k, sample) in s.samples.iter().enumerate() {
            assert!((sample.timestamp - k as f64 / 60.0).abs() < 1e-12);
            let tip = sample.rotation * pointer.tip() + sample.translation;
            assert!((tip - s.true_tips[k]).norm() < 1e-9);
            assert!(tip.z.abs() < 1e-9);
        }
        assert!((s.true_tips.last().unwrap() - Vector3::new(-50.0, -30.0, 0.0)).norm() < 100.0 / 60.0);
    }

    #[test]
    fn circle_path_points() {
        let c = TablePath::Circle {
            center: [10.0, 20.0],
            radius: 5.0,
        };
        let p = c.point_at(c.length() / 4.0);
        assert!((p[0] - 10.0).abs() < 1e-12 && (p[1] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible() {
        let rig = RigConfig::nominal().with_seed(5);
        let path = TablePath::Circle {
            center: [0.0, 0.0],
            radius: 40.0,
        };
        let a = generate_pointer_stream(&rig, &path, 80.0, &PointerModel::default()).unwrap();
        let b = generate_pointer_stream(&rig, &path, 80.0, &PointerModel::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_pointer_stream(&rig.clone().with_seed(6), &path, 80.0, &PointerModel::default()).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn pivot_samples_rotate_about_divot() {
        let pivot = Vector3::new(20.0, -10.0, 0.0);
        let s = generate_pivot_samples(&exact(), &pivot, &PointerModel::default(), 50);
        for sample in &s.samples {
            let tip = sample.rotation * Vector3::new(0.0, 0.0, -150.0) + sample.translation;
            assert!((tip - pivot).norm() < 1e-9);
        }
    }
}
