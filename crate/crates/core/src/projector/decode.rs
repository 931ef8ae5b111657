use nalgebra::Vector2;

use super::gray::{gray_decode, Axis, GrayCodeSequence};
use super::ProjectorError;
use crate::geom::Pixel;
use crate::homography::{apply_homography, estimate_homography};
use crate::raster::ImageFrame;

/// Default margin (intensity levels) between a pattern and its inverse for
/// a bit to count as decoded.
pub const DEFAULT_DECODE_THRESHOLD: u8 = 5;
pub const DEFAULT_PATCH_RADIUS: u32 = 15;
pub const MIN_PATCH_PIXELS: usize = 20;

/// Projector coordinate along one axis for every camera pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMap {
    pub axis: Axis,
    width: u32,
    height: u32,
    values: Vec<Option<f64>>,
    confidence: Vec<f32>,
}

impl CorrespondenceMap {
    pub fn new(axis: Axis, width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            axis,
            width,
            height,
            values: vec![None; n],
            confidence: vec![0.0; n],
        }
    }

    /// Map filled from a continuous function, for exact-geometry tests and
    /// synthetic data.
    pub fn from_fn(axis: Axis, width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Option<f64>) -> Self {
        let mut map = Self::new(axis, width, height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                map.set(x, y, v, if v.is_some() { 1.0 } else { 0.0 });
            }
        }
        map
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        self.values[(y * self.width + x) as usize]
    }

    /// Smallest pattern/inverse contrast over all bits at the pixel.
    pub fn confidence(&self, x: u32, y: u32) -> f32 {
        self.confidence[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: Option<f64>, confidence: f32) {
        let i = (y * self.width + x) as usize;
        self.values[i] = value;
        self.confidence[i] = confidence;
    }

    pub fn decoded_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }
}

/// Decodes captured (pattern, inverse) pairs into a per-pixel projector
/// coordinate. A bit is 1 when the pattern exceeds the inverse by more than
/// `threshold`; a pixel where any bit has `|pattern − inverse| ≤ threshold`
/// is undecodable.
pub fn decode_correspondences(
    captures: &[(ImageFrame, ImageFrame)],
    sequence: &GrayCodeSequence,
    threshold: u8,
) -> Result<CorrespondenceMap, ProjectorError> {
    if captures.len() != sequence.bit_count as usize {
        return Err(ProjectorError::CaptureCount {
            expected: sequence.bit_count as usize,
            found: captures.len(),
        });
    }
    let first = &captures[0].0;
    for (p, q) in captures {
        first.same_size(p)?;
        first.same_size(q)?;
    }
    let (w, h) = (first.width(), first.height());
    let mut map = CorrespondenceMap::new(sequence.axis, w, h);
    let extent = sequence.extent();
    let threshold = threshold as i16;
    for i in 0..(w as usize * h as usize) {
        let mut code = 0u32;
        let mut contrast = i16::MAX;
        for (p, q) in captures {
            let d = p.pixels()[i] as i16 - q.pixels()[i] as i16;
            contrast = contrast.min(d.abs());
            code = (code << 1) | (d > threshold) as u32;
        }
        if contrast > threshold {
            let value = gray_decode(code);
            if value < extent {
                map.values[i] = Some(value as f64);
            }
        }
        map.confidence[i] = contrast as f32;
    }
    Ok(map)
}

/// Transfers a camera corner into the projector through a homography fitted
/// to the decoded correspondences in a square patch around it.
pub fn local_homography_corner(
    corner: &Pixel<f64>,
    map_u: &CorrespondenceMap,
    map_v: &CorrespondenceMap,
    patch_radius: u32,
) -> Result<Pixel<f64>, ProjectorError> {
    if map_u.width != map_v.width || map_u.height != map_v.height {
        return Err(crate::raster::RasterError::DimensionMismatch(
            map_u.width,
            map_u.height,
            map_v.width,
            map_v.height,
        )
        .into());
    }
    let (cam, proj) = patch_correspondences(corner, map_u, map_v, patch_radius);
    if cam.len() < MIN_PATCH_PIXELS {
        return Err(ProjectorError::InsufficientDecodablePixels {
            found: cam.len(),
            required: MIN_PATCH_PIXELS,
        });
    }
    let hmg = estimate_homography(&cam, &proj)?;
    let p = apply_homography(&hmg, &Vector2::new(corner.u, corner.v));
    Ok(Pixel::new(p.x, p.y))
}

fn patch_correspondences(
    corner: &Pixel<f64>,
    map_u: &CorrespondenceMap,
    map_v: &CorrespondenceMap,
    r: u32,
) -> (Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
    let mut cam = Vec::new();
    let mut proj = Vec::new();
    if !corner.is_finite() {
        return (cam, proj);
    }
    let r = r as i64;
    let cx = corner.u.round() as i64;
    let cy = corner.v.round() as i64;
    let x0 = (cx - r).max(0);
    let y0 = (cy - r).max(0);
    let x1 = (cx + r).min(map_u.width as i64 - 1);
    let y1 = (cy + r).min(map_u.height as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let (Some(u), Some(v)) = (map_u.get(x as u32, y as u32), map_v.get(x as u32, y as u32)) {
                cam.push(Vector2::new(x as f64, y as f64));
                proj.push(Vector2::new(u, v));
            }
        }
    }
    (cam, proj)
}
