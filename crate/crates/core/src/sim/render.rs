use nalgebra::{Matrix3, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rig::{streams, RigConfig};
use super::texture::{Texture, TextureSpec};
use super::SimError;
use crate::geom::{CameraModel, Frame, Pixel, Point3, RigidTransform};
use crate::raster::ImageFrame;

/// In-plane placement of the part: part-centred coordinates map to world
/// table coordinates by a rotation of `theta_rad` followed by a shift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub x_mm: f64,
    pub y_mm: f64,
    pub theta_rad: f64,
}

/// Per-frame motion of the part, applied about its own centre.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionStep {
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub dtheta_deg: f64,
}

impl ObjectPose {
    pub fn to_world(&self, q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta_rad.sin_cos();
        [c * q[0] - s * q[1] + self.x_mm, s * q[0] + c * q[1] + self.y_mm]
    }

    pub fn to_object(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta_rad.sin_cos();
        let (dx, dy) = (p[0] - self.x_mm, p[1] - self.y_mm);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn step(&self, m: &MotionStep) -> Self {
        Self {
            x_mm: self.x_mm + m.dx_mm,
            y_mm: self.y_mm + m.dy_mm,
            theta_rad: self.theta_rad + m.dtheta_deg.to_radians(),
        }
    }

    /// Part plane → world, with the part plane tagged as a target frame.
    pub fn world_from_object(&self) -> RigidTransform<f64> {
        RigidTransform::from_axis_angle(
            Frame::Target,
            Frame::World,
            Vector3::new(0.0, 0.0, self.theta_rad),
            Vector3::new(self.x_mm, self.y_mm, 0.0),
        )
    }
}

/// A textured part on the table and a motion script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub texture: TextureSpec,
    pub initial: ObjectPose,
    /// Step `k` moves the part from frame `k` to frame `k + 1`.
    pub motion: Vec<MotionStep>,
    /// Intensity of the bare table.
    pub background: u8,
    /// Radius of the dark blob drawn around the pointer tip, mm.
    pub pointer_radius_mm: f64,
    /// Samples per pixel along each axis.
    pub supersample: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            texture: TextureSpec::default(),
            initial: ObjectPose::default(),
            motion: Vec::new(),
            background: 60,
            pointer_radius_mm: 6.0,
            supersample: 1,
        }
    }
}

impl SceneConfig {
    /// The same step repeated to give `frames` frames in total.
    pub fn with_constant_motion(mut self, step: MotionStep, frames: usize) -> Self {
        self.motion = vec![step; frames.saturating_sub(1)];
        self
    }

    pub fn frame_count(&self) -> usize {
        self.motion.len() + 1
    }

    /// Part pose at `frame`; frames past the script hold the last pose.
    pub fn pose_at(&self, frame: usize) -> ObjectPose {
        self.motion.iter().take(frame).fold(self.initial, |p, m| p.step(m))
    }
}

/// Scene ready for rendering.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub texture: Texture,
}

impl Scene {
    pub fn new(config: SceneConfig) -> Result<Self, SimError> {
        let texture = Texture::new(config.texture.clone())?;
        Ok(Self { config, texture })
    }

    /// Where a point given in part coordinates at `from_frame` lies on the
    /// table at `to_frame`.
    pub fn carry(&self, p_world: [f64; 2], from_frame: usize, to_frame: usize) -> [f64; 2] {
        let q = self.config.pose_at(from_frame).to_object(p_world);
        self.config.pose_at(to_frame).to_world(q)
    }
}

/// Exact image of a part-plane point.
pub fn project_object_point(rig: &RigConfig, pose: &ObjectPose, q: [f64; 2]) -> Result<Pixel<f64>, SimError> {
    let [x, y] = pose.to_world(q);
    let p = rig
        .camera_from_world
        .transform_point(&Point3::new(Frame::World, x, y, 0.0))?;
    Ok(rig.camera.project(&p)?)
}

/// Homography taking part-plane millimetres to camera pixels,
/// `H = K [r1 r2 t]` of the part → camera pose. Lens distortion is ignored.
pub fn object_homography(rig: &RigConfig, pose: &ObjectPose) -> Matrix3<f64> {
    let cam_from_obj = rig
        .camera_from_world
        .compose(&pose.world_from_object())
        .expect("frames chain");
    let r = cam_from_obj.rotation();
    let t = cam_from_obj.translation();
    let rt = Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), *t]);
    rig.camera.k_matrix() * rt
}

/// Renders the camera view of a [`Scene`] by casting every pixel (or
/// sub-pixel sample) onto the table once and sampling the part texture at
/// the part-frame coordinates of that table point.
pub struct Renderer {
    camera: CameraModel<f64>,
    camera_from_world: RigidTransform<f64>,
    supersample: u32,
    /// Table point per sample, row-major with the sub-samples of a pixel
    /// stored together.
    table: Vec<[f32; 2]>,
    intensity_sigma: f64,
    seed_rig: RigConfig,
}

impl Renderer {
    pub fn new(rig: &RigConfig, supersample: u32) -> Result<Self, SimError> {
        let s = supersample.max(1);
        let cam = rig.camera;
        let plane = rig.table_in_camera();
        let world_from_camera = rig.camera_from_world.inverse();
        let n = (cam.width as usize) * (cam.height as usize) * (s * s) as usize;
        let mut table = Vec::with_capacity(n);
        for y in 0..cam.height {
            for x in 0..cam.width {
                for j in 0..s {
                    for i in 0..s {
                        let ox = (i as f64 + 0.5) / s as f64 - 0.5;
                        let oy = (j as f64 + 0.5) / s as f64 - 0.5;
                        let px = Pixel::new(x as f64 + ox, y as f64 + oy);
                        let hit = match cam.unproject_to_plane(&px, &plane) {
                            Ok(p) => {
                                let w = world_from_camera.transform_point(&p)?;
                                [w.x() as f32, w.y() as f32]
                            }
                            Err(_) => [f32::NAN, f32::NAN],
                        };
                        table.push(hit);
                    }
                }
            }
        }
        Ok(Self {
            camera: cam,
            camera_from_world: rig.camera_from_world,
            supersample: s,
            table,
            intensity_sigma: rig.noise.intensity_sigma,
            seed_rig: rig.clone(),
        })
    }

    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    /// Frame `frame` of `scene`, optionally with the pointer tip (world mm)
    /// drawn as a dark disc where it projects into the image.
    pub fn render(&self, scene: &Scene, frame: usize, pointer_tip: Option<&Vector3<f64>>) -> ImageFrame {
        let pose = scene.config.pose_at(frame);
        let (s, c) = pose.theta_rad.sin_cos();
        let per_pixel = (self.supersample * self.supersample) as usize;
        let bg = scene.config.background as f64;
        let (w, h) = (self.camera.width, self.camera.height);
        let mut out = vec![0u8; w as usize * h as usize];
        let normal = Normal::new(0.0, self.intensity_sigma.max(0.0)).expect("finite sigma");
        let mut rng = self.seed_rig.rng(streams::RENDER + frame as u64);
        for (i, px) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in &self.table[i * per_pixel..(i + 1) * per_pixel] {
                let (dx, dy) = (p[0] as f64 - pose.x_mm, p[1] as f64 - pose.y_mm);
                let q = [c * dx + s * dy, -s * dx + c * dy];
                acc += scene.texture.sample(q[0], q[1]).unwrap_or(bg);
            }
            let mut v = acc / per_pixel as f64;
            if self.intensity_sigma > 0.0 {
                v += normal.sample(&mut rng);
            }
            *px = v.round().clamp(0.0, 255.0) as u8;
        }
        let mut img = ImageFrame::new(w, h, out, frame as u64).expect("buffer matches size");
        if let Some(tip) = pointer_tip {
            self.draw_pointer(&mut img, tip, scene.config.pointer_radius_mm);
        }
        img
    }

    fn draw_pointer(&self, img: &mut ImageFrame, tip: &Vector3<f64>, radius_mm: f64) {
        let p = self.camera_from_world.apply(tip);
        let Ok(centre) = self.camera.project_coords(&p) else {
            return;
        };
        let r = radius_mm * self.camera.fx / p.z;
        let (w, h) = (img.width() as f64, img.height() as f64);
        if !(centre.u > -r && centre.v > -r && centre.u < w + r && centre.v < h + r) {
            return;
        }
        let x0 = (centre.u - r).floor().max(0.0) as u32;
        let y0 = (centre.v - r).floor().max(0.0) as u32;
        let x1 = (centre.u + r).ceil().min(w - 1.0) as u32;
        let y1 = (centre.v + r).ceil().min(h - 1.0) as u32;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if (x as f64 - centre.u).hypot(y as f64 - centre.v) <= r {
                    img.set(x, y, 20);
                }
            }
        }
    }
}
