use serde::{Deserialize, Serialize};

use super::pyramid::{Level, Pyramid};
use super::FlowError;
use crate::geom::Pixel;
use crate::raster::ImageFrame;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackParams {
    pub levels: usize,
    /// Odd window side length, px.
    pub window: usize,
    pub max_iterations: usize,
    /// Stop iterating when the update is shorter than this, px.
    pub epsilon: f64,
    /// Smallest eigenvalue of the window-averaged structure tensor
    /// (gradients in intensity/255 per pixel).
    pub min_eigenvalue: f64,
    /// Largest mean absolute intensity difference (0–255 scale) between the
    /// template and the tracked window.
    pub max_residual: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 21,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigenvalue: 1e-4,
            max_residual: 25.0,
        }
    }
}

impl TrackParams {
    pub fn radius(&self) -> usize {
        self.window / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReason {
    OutOfBounds,
    LowTexture,
    Diverged,
    HighResidual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum TrackStatus {
    Tracked,
    Lost(LossReason),
}

impl TrackStatus {
    pub fn is_tracked(&self) -> bool {
        matches!(self, TrackStatus::Tracked)
    }
}

/// Result of tracking a point set from one frame to the next. Lost points
/// keep their last known position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub points: Vec<Pixel<f64>>,
    pub status: Vec<TrackStatus>,
    /// Mean absolute intensity difference over the window, 0–255 scale.
    pub residuals: Vec<f64>,
}

impl TrackState {
    pub fn tracked_count(&self) -> usize {
        self.status.iter().filter(|s| s.is_tracked()).count()
    }
}

/// Pyramidal Lucas–Kanade from `prev` to `next`.
pub fn track_points(
    prev: &ImageFrame,
    next: &ImageFrame,
    points: &[Pixel<f64>],
    params: &TrackParams,
) -> Result<TrackState, FlowError> {
    prev.same_size(next)?;
    let a = Pyramid::new(prev, params.levels);
    let b = Pyramid::new(next, params.levels);
    Ok(track_pyramids(&a, &b, points, params))
}

/// Same as [`track_points`] on prebuilt pyramids of equal size.
pub fn track_pyramids(prev: &Pyramid, next: &Pyramid, points: &[Pixel<f64>], params: &TrackParams) -> TrackState {
    let mut out = TrackState {
        points: Vec::with_capacity(points.len()),
        status: Vec::with_capacity(points.len()),
        residuals: Vec::with_capacity(points.len()),
    };
    for p in points {
        let (q, status, residual) = track_one(prev, next, p, params);
        out.points.push(q);
        out.status.push(status);
        out.residuals.push(residual);
    }
    out
}

fn inside(level: &Level, x: f64, y: f64, margin: f64) -> bool {
    x >= margin && y >= margin && x <= level.width as f64 - 1.0 - margin && y <= level.height as f64 - 1.0 - margin
}

fn track_one(prev: &Pyramid, next: &Pyramid, p: &Pixel<f64>, params: &TrackParams) -> (Pixel<f64>, TrackStatus, f64) {
    let r = params.radius() as isize;
    let base = &prev.levels[0];
    // Windows reaching past the border would be filled by clamping and bias
    // the estimate, so both ends keep a full window inside the frame.
    let margin = r as f64;
    if !p.is_finite() || !inside(base, p.u, p.v, margin) {
        return (*p, TrackStatus::Lost(LossReason::OutOfBounds), f64::INFINITY);
    }
    let n_win = ((2 * r + 1) * (2 * r + 1)) as f64;
    let levels = prev.levels.len().min(next.levels.len());
    let (mut gx, mut gy) = (0.0f64, 0.0f64);
    let mut template = Vec::with_capacity(n_win as usize);

    for l in (0..levels).rev() {
        let lp = &prev.levels[l];
        let ln = &next.levels[l];
        let scale = (1u64 << l) as f64;
        let (px, py) = (p.u / scale, p.v / scale);

        template.clear();
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (px + dx as f64, py + dy as f64);
                let i = lp.sample(&lp.image, x, y);
                let ix = lp.sample(&lp.grad_x, x, y);
                let iy = lp.sample(&lp.grad_y, x, y);
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                template.push((i, ix, iy));
            }
        }
        let tr = (gxx + gyy) / n_win;
        let det = (gxx * gyy - gxy * gxy) / (n_win * n_win);
        let min_eig = tr / 2.0 - ((tr * tr / 4.0 - det).max(0.0)).sqrt();
        if min_eig < params.min_eigenvalue {
            return (*p, TrackStatus::Lost(LossReason::LowTexture), f64::INFINITY);
        }
        let inv_det = 1.0 / (gxx * gyy - gxy * gxy);

        let (mut dx, mut dy) = (0.0f64, 0.0f64);
        for _ in 0..params.max_iterations {
            let (cx, cy) = (px + gx + dx, py + gy + dy);
            if !inside(ln, cx, cy, 0.0) {
                return (*p, TrackStatus::Lost(LossReason::OutOfBounds), f64::INFINITY);
            }
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for wy in -r..=r {
                for wx in -r..=r {
                    let j = ln.sample(&ln.image, cx + wx as f64, cy + wy as f64);
                    let (i, ix, iy) = template[k];
                    let diff = i - j;
                    bx += diff * ix;
                    by += diff * iy;
                    k += 1;
                }
            }
            let ux = inv_det * (gyy * bx - gxy * by);
            let uy = inv_det * (gxx * by - gxy * bx);
            if !ux.is_finite() || !uy.is_finite() {
                return (*p, TrackStatus::Lost(LossReason::Diverged), f64::INFINITY);
            }
            dx += ux;
            dy += uy;
            if (dx * dx + dy * dy).sqrt() > params.window as f64 {
                return (*p, TrackStatus::Lost(LossReason::Diverged), f64::INFINITY);
            }
            if (ux * ux + uy * uy).sqrt() < params.epsilon {
                break;
            }
        }
        if l > 0 {
            gx = 2.0 * (gx + dx);
            gy = 2.0 * (gy + dy);
        } else {
            gx += dx;
            gy += dy;
        }
    }

    let q = Pixel::new(p.u + gx, p.v + gy);
    let ln = &next.levels[0];
    if !inside(ln, q.u, q.v, margin) {
        return (q, TrackStatus::Lost(LossReason::OutOfBounds), f64::INFINITY);
    }
    let mut sad = 0.0;
    for wy in -r..=r {
        for wx in -r..=r {
            let i = base.sample(&base.image, p.u + wx as f64, p.v + wy as f64);
            let j = ln.sample(&ln.image, q.u + wx as f64, q.v + wy as f64);
            sad += (i - j).abs();
        }
    }
    let residual = sad / n_win * 255.0;
    if residual > params.max_residual {
        return (q, TrackStatus::Lost(LossReason::HighResidual), residual);
    }
    (q, TrackStatus::Tracked, residual)
}
