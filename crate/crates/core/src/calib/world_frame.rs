use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::CalibError;
use crate::geom::{Frame, Point3, RigidTransform};

/// Maximum out-of-plane residual accepted for the touched grid, mm.
pub const MAX_PLANE_RESIDUAL_MM: f64 = 1.0;

/// Circle grid with a machined notch at each circle centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleGridSpec {
    pub rows: u32,
    pub cols: u32,
    /// Distance between diagonal neighbours, mm.
    pub diagonal_spacing: f64,
    #[serde(default = "default_notch")]
    pub notch_diameter: f64,
    #[serde(default = "default_asymmetric")]
    pub asymmetric: bool,
}

fn default_notch() -> f64 {
    0.5
}

fn default_asymmetric() -> bool {
    true
}

impl CircleGridSpec {
    pub fn new(rows: u32, cols: u32, diagonal_spacing: f64) -> Result<Self, CalibError> {
        let spec = Self {
            rows,
            cols,
            diagonal_spacing,
            notch_diameter: default_notch(),
            asymmetric: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        if self.rows < 4 || self.cols < 4 {
            return Err(CalibError::InvalidGrid(
                "grid needs at least 4 rows and 4 columns".into(),
            ));
        }
        if !(self.diagonal_spacing > 0.0) || !(self.notch_diameter > 0.0) {
            return Err(CalibError::InvalidGrid(
                "spacing and notch diameter must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Circle centre in grid coordinates (mm, z = 0). Row 0 runs along +x;
    /// odd rows of an asymmetric grid are offset by half a pitch.
    pub fn point(&self, row: u32, col: u32) -> Vector3<f64> {
        if self.asymmetric {
            let h = self.diagonal_spacing / std::f64::consts::SQRT_2;
            Vector3::new((2 * col + row % 2) as f64 * h, row as f64 * h, 0.0)
        } else {
            Vector3::new(
                col as f64 * self.diagonal_spacing,
                row as f64 * self.diagonal_spacing,
                0.0,
            )
        }
    }

    pub fn points(&self) -> Vec<(u32, u32, Vector3<f64>)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, self.point(r, c)))
            .collect()
    }
}

/// Tip position recorded while resting in the notch of circle `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleTouch {
    pub row: u32,
    pub col: u32,
    /// Tracker-frame position, mm.
    pub point: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct WorldFrameFit {
    /// Tracker → world.
    pub world_from_tracker: RigidTransform<f64>,
    /// Largest absolute distance of a touch from the fitted plane, mm.
    pub plane_residual_mm: f64,
}

/// Defines the world frame on the table from touched grid circles: origin at
/// circle (0, 0), x along the least-squares line through row 0, z along the
/// plane normal facing the tracker, y = z × x.
pub fn build_world_frame(grid: &CircleGridSpec, touches: &[CircleTouch]) -> Result<WorldFrameFit, CalibError> {
    grid.validate()?;
    let mut seen: Vec<(u32, u32)> = touches.iter().map(|t| (t.row, t.col)).collect();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 6 {
        return Err(CalibError::InsufficientTouches(seen.len()));
    }
    if let Some(t) = touches.iter().find(|t| t.row >= grid.rows || t.col >= grid.cols) {
        return Err(CalibError::InvalidGrid(format!(
            "touch ({}, {}) is outside the grid",
            t.row, t.col
        )));
    }
    let pts: Vec<Vector3<f64>> = touches.iter().map(|t| Vector3::from(t.point)).collect();
    if !pts.iter().all(|p| p.iter().all(|x| x.is_finite())) {
        return Err(crate::geom::GeomError::NonFinite.into());
    }

    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let imin = (0..3)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap_or(0);
    let mut normal: Vector3<f64> = eig.eigenvectors.column(imin).into();
    let residual = pts
        .iter()
        .map(|p| normal.dot(&(p - centroid)).abs())
        .fold(0.0, f64::max);
    if residual >= MAX_PLANE_RESIDUAL_MM {
        return Err(CalibError::NonPlanarTouches { residual_mm: residual });
    }

    let project = |p: &Vector3<f64>, n: &Vector3<f64>| p - n * n.dot(&(p - centroid));

    let origin_touches: Vec<&Vector3<f64>> = touches
        .iter()
        .zip(&pts)
        .filter(|(t, _)| t.row == 0 && t.col == 0)
        .map(|(_, p)| p)
        .collect();
    if origin_touches.is_empty() {
        return Err(CalibError::InvalidGrid("circle (0, 0) was not touched".into()));
    }
    let mut row0: Vec<(u32, Vector3<f64>)> = touches
        .iter()
        .zip(&pts)
        .filter(|(t, _)| t.row == 0)
        .map(|(t, p)| (t.col, *p))
        .collect();
    row0.sort_by_key(|(c, _)| *c);
    if row0
        .iter()
        .map(|(c, _)| c)
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        < 2
    {
        return Err(CalibError::InvalidGrid("need at least two touches on row 0".into()));
    }

    // Least-squares line through row 0: principal direction of its points.
    let m = row0.len() as f64;
    let rc = row0.iter().map(|(_, p)| p).sum::<Vector3<f64>>() / m;
    let mut rcov = Matrix3::zeros();
    for (_, p) in &row0 {
        let d = p - rc;
        rcov += d * d.transpose();
    }
    let reig = rcov.symmetric_eigen();
    let imax = (0..3)
        .max_by(|&a, &b| reig.eigenvalues[a].total_cmp(&reig.eigenvalues[b]))
        .unwrap_or(0);
    let mut x_axis: Vector3<f64> = reig.eigenvectors.column(imax).into();
    let along = row0.last().map(|(_, p)| *p).unwrap_or(rc) - row0[0].1;
    if x_axis.dot(&along) < 0.0 {
        x_axis = -x_axis;
    }

    // Orient the normal toward the tracker origin; when the tracker origin
    // lies in the plane, fall back to rows increasing along +y.
    let toward_tracker = normal.dot(&(-centroid));
    if toward_tracker.abs() > 1e-9 {
        if toward_tracker < 0.0 {
            normal = -normal;
        }
    } else if let Some((_, p_row)) = touches
        .iter()
        .zip(&pts)
        .find(|(t, _)| t.row > 0)
        .map(|(t, p)| (t.row, *p))
    {
        let y_guess = p_row - origin_touches[0];
        if normal.cross(&x_axis).dot(&y_guess) < 0.0 {
            normal = -normal;
        }
    }

    let x_axis = (x_axis - normal * normal.dot(&x_axis)).normalize();
    let y_axis = normal.cross(&x_axis);
    let origin = origin_touches.iter().map(|p| project(p, &normal)).sum::<Vector3<f64>>() / origin_touches.len() as f64;

    // tracker_from_world has the world axes as columns.
    let tracker_from_world = RigidTransform::new(
        Frame::World,
        Frame::Tracker,
        Matrix3::from_columns(&[x_axis, y_axis, normal]),
        origin,
    )?;
    Ok(WorldFrameFit {
        world_from_tracker: tracker_from_world.inverse(),
        plane_residual_mm: residual,
    })
}

/// Touches of every circle of `grid` placed in the tracker frame by
/// `tracker_from_world`.
pub fn touches_for(grid: &CircleGridSpec, tracker_from_world: &RigidTransform<f64>) -> Vec<CircleTouch> {
    grid.points()
        .into_iter()
        .map(|(row, col, p)| {
            let q = tracker_from_world
                .transform_point(&Point3::from_vector(Frame::World, p))
                .map(|q| q.coords)
                .unwrap_or(p);
            CircleTouch {
                row,
                col,
                point: [q.x, q.y, q.z],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> CircleGridSpec {
        CircleGridSpec::new(4, 11, 20.0).unwrap()
    }

    #[test]
    fn grid_geometry_is_asymmetric() {
        let g = grid();
        let d = (g.point(1, 0) - g.point(0, 0)).norm();
        assert!((d - 20.0).abs() < 1e-12);
        assert_eq!(g.point(0, 3).y, 0.0);
        assert!(CircleGridSpec::new(3, 11, 20.0).is_err());
    }

    #[test]
    fn touches_on_table_plane_give_identity() {
        let g = grid();
        let id = RigidTransform::identity(Frame::World, Frame::Tracker);
        let fit = build_world_frame(&g, &touches_for(&g, &id)).unwrap();
        let wt = fit.world_from_tracker;
        assert!((wt.rotation() - Matrix3::identity()).amax() < 1e-9);
        assert!(wt.translation().norm() < 1e-9);
        assert!(fit.plane_residual_mm < 1e-9);
    }

    #[test]
    fn recovers_generator_transform() {
        let g = grid();
        // Tracker mounted above the table, looking down.
        let tracker_from_world = RigidTransform::from_axis_angle(
            Frame::World,
            Frame::Tracker,
            Vector3::new(2.9, 0.2, -0.4),
            Vector3::new(-150.0, 80.0, 1400.0),
        );
        let fit = build_world_frame(&g, &touches_for(&g, &tracker_from_world)).unwrap();
        let expected = tracker_from_world.inverse();
        assert!(fit.world_from_tracker.rotation_angle_to(&expected) < 1e-6);
        assert!((fit.world_from_tracker.translation() - expected.translation()).norm() < 1e-6);
    }

    #[test]
    fn outlier_touch_is_rejected() {
        let g = grid();
        let id = RigidTransform::identity(Frame::World, Frame::Tracker);
        let mut touches = touches_for(&g, &id);
        touches[17].point[2] += 2.0;
        assert!(matches!(
            build_world_frame(&g, &touches),
            Err(CalibError::NonPlanarTouches { .. })
        ));
    }

    #[test]
    fn too_few_circles() {
        let g = grid();
        let id = RigidTransform::identity(Frame::World, Frame::Tracker);
        let touches = touches_for(&g, &id);
        assert!(matches!(
            build_world_frame(&g, &touches[..5]),
            Err(CalibError::InsufficientTouches(5))
        ));
    }
}
