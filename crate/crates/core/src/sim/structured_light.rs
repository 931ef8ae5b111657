use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rig::{streams, RigConfig};
use super::SimError;
use crate::geom::{Frame, Pixel, Plane, RigidTransform};
use crate::projector::{
    decode_correspondences, Axis, CorrespondenceMap, GrayCodeSequence, ProjectorView, DEFAULT_DECODE_THRESHOLD,
    DEFAULT_PATCH_RADIUS,
};
use crate::raster::ImageFrame;

/// Captured intensity of an unlit surface.
pub const AMBIENT: f64 = 30.0;
/// Added intensity of a fully lit white surface.
pub const PROJECTOR_GAIN: f64 = 200.0;
pub const BLACK_ALBEDO: f64 = 0.25;

/// Printed checkerboard; `rows × cols` inner corners spaced `square_mm`,
/// with corner `(0, 0)` at the target origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkerboard {
    pub rows: u32,
    pub cols: u32,
    pub square_mm: f64,
}

impl Default for Checkerboard {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 9,
            square_mm: 20.0,
        }
    }
}

impl Checkerboard {
    /// Inner corners, row-major.
    pub fn corners(&self) -> Vec<Vector2<f64>> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| Vector2::new(c as f64 * self.square_mm, r as f64 * self.square_mm))
            .collect()
    }

    pub fn centre(&self) -> Vector2<f64> {
        Vector2::new(
            (self.cols - 1) as f64 * self.square_mm / 2.0,
            (self.rows - 1) as f64 * self.square_mm / 2.0,
        )
    }

    /// Reflectance at a target point: squares alternate between white and
    /// dark over the board plus a one-square border; white beyond.
    pub fn albedo(&self, x: f64, y: f64) -> f64 {
        let (i, j) = ((x / self.square_mm).floor(), (y / self.square_mm).floor());
        let on_board = i >= -1.0 && j >= -1.0 && i < self.cols as f64 && j < self.rows as f64;
        if on_board && (i + j).rem_euclid(2.0) == 0.0 {
            BLACK_ALBEDO
        } else {
            1.0
        }
    }
}

/// A planar surface lit by the projector: the bare table, or a board.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LitTarget {
    /// Target → world.
    pub world_from_target: RigidTransform<f64>,
    pub board: Option<Checkerboard>,
}

impl LitTarget {
    pub fn table() -> Self {
        Self {
            world_from_target: RigidTransform::identity(Frame::Target, Frame::World),
            board: None,
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    /// Continuous projector pixel lighting this camera pixel.
    proj: [f64; 2],
    albedo: f32,
}

/// Per-camera-pixel light transport for one target placement: which
/// projector pixel reaches the surface seen by each camera pixel, and the
/// surface albedo there. Images and maps cover only the ROI (the whole
/// sensor by default).
pub struct Illumination {
    origin: [u32; 2],
    width: u32,
    height: u32,
    projector_size: (u32, u32),
    hits: Vec<Option<Hit>>,
    intensity_sigma: f64,
    rig: RigConfig,
}

impl Illumination {
    pub fn new(rig: &RigConfig, target: &LitTarget, roi: Option<Roi>) -> Result<Self, SimError> {
        let cam = rig.camera;
        let camera_from_target = rig.camera_from_world.compose(&target.world_from_target)?;
        let target_from_camera = camera_from_target.inverse();
        let plane = Plane::new(
            Frame::Camera,
            *camera_from_target.translation(),
            camera_from_target.rotation() * Vector3::z(),
        );
        let roi = roi.unwrap_or(Roi {
            x0: 0,
            y0: 0,
            x1: cam.width,
            y1: cam.height,
        });
        let (x1, y1) = (roi.x1.min(cam.width), roi.y1.min(cam.height));
        if roi.x0 >= x1 || roi.y0 >= y1 {
            return Err(SimError::InvalidConfig("empty region of interest".into()));
        }
        let (width, height) = (x1 - roi.x0, y1 - roi.y0);
        let proj = rig.projector;
        let pc = rig.projector_from_camera;
        let mut hits = vec![None; width as usize * height as usize];
        for y in roi.y0..y1 {
            for x in roi.x0..x1 {
                let Ok(p) = cam.unproject_to_plane(&Pixel::new(x as f64, y as f64), &plane) else {
                    continue;
                };
                let Ok(b) = proj.project_coords(&pc.apply(&p.coords)) else {
                    continue;
                };
                let (col, row) = ((b.u + 0.5).floor(), (b.v + 0.5).floor());
                if col < 0.0 || row < 0.0 || col >= proj.width as f64 || row >= proj.height as f64 {
                    continue;
                }
                let t = target_from_camera.apply(&p.coords);
                let albedo = target.board.map_or(1.0, |bd| bd.albedo(t.x, t.y));
                hits[((y - roi.y0) * width + x - roi.x0) as usize] = Some(Hit {
                    proj: [b.u, b.v],
                    albedo: albedo as f32,
                });
            }
        }
        Ok(Self {
            origin: [roi.x0, roi.y0],
            width,
            height,
            projector_size: (proj.width, proj.height),
            hits,
            intensity_sigma: rig.noise.intensity_sigma,
            rig: rig.clone(),
        })
    }

    /// Camera pixel of the top-left entry of every image and map.
    pub fn origin(&self) -> [u32; 2] {
        self.origin
    }

    /// Exact continuous projector coordinate per lit camera pixel.
    pub fn projector_coordinates(&self, axis: Axis) -> CorrespondenceMap {
        let k = axis_index(axis);
        CorrespondenceMap::from_fn(axis, self.width, self.height, |x, y| {
            self.hits[(y * self.width + x) as usize].map(|h| h.proj[k])
        })
    }

    /// Index of the projector column or row lighting each camera pixel,
    /// i.e. what a perfect decoder returns.
    pub fn projector_indices(&self, axis: Axis) -> CorrespondenceMap {
        let k = axis_index(axis);
        CorrespondenceMap::from_fn(axis, self.width, self.height, |x, y| {
            self.hits[(y * self.width + x) as usize].map(|h| (h.proj[k] + 0.5).floor())
        })
    }

    pub fn lit_count(&self) -> usize {
        self.hits.iter().filter(|h| h.is_some()).count()
    }

    /// Camera image while the projector shows `pattern` (projector-sized,
    /// nearest pixel). `capture_index` selects the noise stream.
    pub fn capture(&self, pattern: &ImageFrame, capture_index: u64) -> ImageFrame {
        assert_eq!((pattern.width(), pattern.height()), self.projector_size, "pattern size");
        self.render(capture_index, |p| {
            let (c, r) = ((p[0] + 0.5).floor() as u32, (p[1] + 0.5).floor() as u32);
            pattern.get(c, r) as f64 / 255.0
        })
    }

    /// Pattern/inverse capture pairs for every bit of `seq`, most
    /// significant first.
    pub fn graycode_captures(&self, seq: &GrayCodeSequence) -> Vec<(ImageFrame, ImageFrame)> {
        let k = axis_index(seq.axis);
        let base = if seq.axis == Axis::Column { 0 } else { 1 << 16 };
        (0..seq.bit_count)
            .map(|b| {
                let shot = |inverse: bool, idx: u64| {
                    self.render(base + idx, |p| {
                        let c = (p[k] + 0.5).floor() as u32;
                        (seq.lit(b, c) != inverse) as u8 as f64
                    })
                };
                (shot(false, 2 * b as u64), shot(true, 2 * b as u64 + 1))
            })
            .collect()
    }

    fn render(&self, capture_index: u64, level: impl Fn(&[f64; 2]) -> f64) -> ImageFrame {
        let normal = Normal::new(0.0, self.intensity_sigma.max(0.0)).expect("finite sigma");
        let mut rng = self.rig.rng(streams::CAPTURE + capture_index);
        let pixels = self
            .hits
            .iter()
            .map(|h| {
                let mut v = match h {
                    Some(h) => AMBIENT + h.albedo as f64 * PROJECTOR_GAIN * level(&h.proj),
                    None => AMBIENT,
                };
                if self.intensity_sigma > 0.0 {
                    v += normal.sample(&mut rng);
                }
                v.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        ImageFrame::new(self.width, self.height, pixels, capture_index).expect("buffer matches size")
    }
}

fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::Column => 0,
        Axis::Row => 1,
    }
}

/// How the correspondence maps of simulated projector views are produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapSource {
    /// Render gray-code captures and decode them.
    Decoded,
    /// Exact continuous projector coordinates.
    Exact,
    /// Exact coordinates plus Gaussian noise of `sigma_px` projector pixels.
    Perturbed { sigma_px: f64 },
}

/// A simulated board placement for projector calibration.
#[derive(Clone, Debug)]
pub struct SimProjectorView {
    pub world_from_target: RigidTransform<f64>,
    /// Detected corners carry `corner_sigma_px` noise; maps per `MapSource`.
    pub view: ProjectorView,
    pub true_camera_corners: Vec<Vector2<f64>>,
    pub true_projector_corners: Vec<Vector2<f64>>,
}

/// `count` random board placements near the table, tilted 15°–35°, with
/// every corner and its decoding patch visible to the camera and lit by the
/// projector.
pub fn projector_calibration_views(
    rig: &RigConfig,
    board: &Checkerboard,
    count: usize,
    source: MapSource,
) -> Result<Vec<SimProjectorView>, SimError> {
    const MAX_ATTEMPTS: usize = 10_000;
    let mut rng = rig.rng(streams::BOARD_POSES);
    let mut corner_rng = rig.rng(streams::CORNERS);
    let mut map_rng = rig.rng(streams::MAPS);
    let margin = DEFAULT_PATCH_RADIUS as f64 + 2.0;
    let corners = board.corners();
    let mut views = Vec::with_capacity(count);
    let bundle = rig.bundle();
    let mut attempts = 0;
    while views.len() < count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SimError::NoBoardPose(MAX_ATTEMPTS));
        }
        let azimuth = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let tilt = rng.random_range(15f64..35.0).to_radians();
        let spin = rng.random_range(-30f64..30.0).to_radians();
        let axis = nalgebra::Unit::new_normalize(Vector3::new(azimuth.cos(), azimuth.sin(), 0.0));
        let rot = (Rotation3::from_axis_angle(&axis, tilt) * Rotation3::from_axis_angle(&Vector3::z_axis(), spin))
            .into_inner();
        let centre = Vector3::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(20.0..150.0),
        );
        let c = board.centre();
        let t = centre - rot * Vector3::new(c.x, c.y, 0.0);
        let world_from_target = RigidTransform::new(Frame::Target, Frame::World, rot, t)?;

        let mut cam_px = Vec::with_capacity(corners.len());
        let mut proj_px = Vec::with_capacity(corners.len());
        let mut ok = true;
        for q in &corners {
            let w = world_from_target.apply(&Vector3::new(q.x, q.y, 0.0));
            let p = crate::geom::Point3::from_vector(Frame::World, w);
            let (Ok(a), Ok(b)) = (bundle.world_to_camera_pixel(&p), bundle.world_to_projector_pixel(&p)) else {
                ok = false;
                break;
            };
            let inside = |px: &Pixel<f64>, w: u32, h: u32, m: f64| {
                px.u >= m && px.v >= m && px.u <= w as f64 - 1.0 - m && px.v <= h as f64 - 1.0 - m
            };
            if !inside(&a, rig.camera.width, rig.camera.height, margin)
                || !inside(&b, rig.projector.width, rig.projector.height, 4.0 * margin)
            {
                ok = false;
                break;
            }
            cam_px.push(Vector2::new(a.u, a.v));
            proj_px.push(Vector2::new(b.u, b.v));
        }
        if !ok {
            continue;
        }

        let target = LitTarget {
            world_from_target,
            board: Some(*board),
        };
        let roi = corner_roi(&cam_px, margin + 2.0, rig.camera.width, rig.camera.height);
        let light = Illumination::new(rig, &target, Some(roi))?;
        let (map_u, map_v) = match source {
            MapSource::Exact => (
                light.projector_coordinates(Axis::Column),
                light.projector_coordinates(Axis::Row),
            ),
            MapSource::Perturbed { sigma_px } => {
                let n = Normal::new(0.0, sigma_px).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                let mut perturb = |axis| {
                    let mut m = light.projector_coordinates(axis);
                    for y in 0..m.height() {
                        for x in 0..m.width() {
                            if let Some(v) = m.get(x, y) {
                                m.set(x, y, Some(v + n.sample(&mut map_rng)), 1.0);
                            }
                        }
                    }
                    m
                };
                (perturb(Axis::Column), perturb(Axis::Row))
            }
            MapSource::Decoded => {
                let (pw, ph) = (rig.projector.width, rig.projector.height);
                let cols = GrayCodeSequence::new(Axis::Column, pw, ph);
                let rows = GrayCodeSequence::new(Axis::Row, pw, ph);
                (
                    decode_correspondences(&light.graycode_captures(&cols), &cols, DEFAULT_DECODE_THRESHOLD)?,
                    decode_correspondences(&light.graycode_captures(&rows), &rows, DEFAULT_DECODE_THRESHOLD)?,
                )
            }
        };
        let sigma = rig.noise.corner_sigma_px;
        let noisy: Vec<Vector2<f64>> = cam_px
            .iter()
            .map(|p| {
                if sigma > 0.0 {
                    let n = Normal::new(0.0, sigma).expect("finite sigma");
                    p + Vector2::new(n.sample(&mut corner_rng), n.sample(&mut corner_rng))
                } else {
                    *p
                }
            })
            .collect();
        views.push(SimProjectorView {
            world_from_target,
            view: ProjectorView {
                plane_points: corners.clone(),
                camera_corners: noisy,
                map_u,
                map_v,
                map_origin: light.origin(),
            },
            true_camera_corners: cam_px,
            true_projector_corners: proj_px,
        });
    }
    Ok(views)
}

fn corner_roi(corners: &[Vector2<f64>], margin: f64, width: u32, height: u32) -> Roi {
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for c in corners {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    Roi {
        x0: (lo.x - margin).floor().max(0.0) as u32,
        y0: (lo.y - margin).floor().max(0.0) as u32,
        x1: ((hi.x + margin).ceil() as u32 + 1).min(width),
        y1: ((hi.y + margin).ceil() as u32 + 1).min(height),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NoiseConfig;

    fn rig() -> RigConfig {
        RigConfig::quarter_resolution().with_noise(NoiseConfig::none())
    }

    #[test]
    fn all_white_pattern_lights_work_area_uniformly() {
        let rig = rig();
        let light = Illumination::new(&rig, &LitTarget::table(), None).unwrap();
        let white = ImageFrame::filled(1920, 1080, 255);
        let img = light.capture(&white, 0);
        let b = rig.bundle();
        for (x, y) in [(-250.0, -200.0), (0.0, 0.0), (240.0, 190.0), (-100.0, 150.0)] {
            let p = b
                .world_to_camera_pixel(&crate::geom::Point3::new(Frame::World, x, y, 0.0))
                .unwrap();
            assert_eq!(img.get(p.u.round() as u32, p.v.round() as u32), 230);
        }
        let lit = img.pixels().iter().filter(|v| **v == 230).count();
        assert_eq!(lit, light.lit_count());
    }

    #[test]
    fn noiseless_captures_decode_to_truth() {
        let rig = rig();
        let light = Illumination::new(&rig, &LitTarget::table(), None).unwrap();
        for axis in [Axis::Column, Axis::Row] {
            let seq = GrayCodeSequence::new(axis, 1920, 1080);
            let map = decode_correspondences(&light.graycode_captures(&seq), &seq, 0).unwrap();
            assert_eq!(map.values(), light.projector_indices(axis).values());
        }
    }

    #[test]
    fn checkerboard_albedo_pattern() {
        let b = Checkerboard::default();
        assert_eq!(b.albedo(5.0, 5.0), BLACK_ALBEDO);
        assert_eq!(b.albedo(25.0, 5.0), 1.0);
        assert_eq!(b.albedo(-5.0, -5.0), BLACK_ALBEDO);
        assert_eq!(b.albedo(-25.0, 5.0), 1.0);
        assert_eq!(b.corners().len(), 63);
    }

    #[test]
    fn exact_views_see_all_corners() {
        let views = projector_calibration_views(&rig(), &Checkerboard::default(), 3, MapSource::Exact).unwrap();
        assert_eq!(views.len(), 3);
        for v in &views {
            for (c, p) in v.true_camera_corners.iter().zip(&v.true_projector_corners) {
                let o = v.view.map_origin;
                let (x, y) = (c.x.round() as u32 - o[0], c.y.round() as u32 - o[1]);
                assert!(v.view.map_u.get(x, y).is_some());
                assert!((v.view.map_u.get(x, y).unwrap() - p.x).abs() < 10.0);
            }
        }
    }
}
