use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::raster::ImageFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureKind {
    /// Soft-edged checkerboard plus two octaves of value noise.
    Procedural { seed: u64, checker_mm: f64 },
    /// Uniform surface, untrackable.
    Constant { value: u8 },
}

/// Rectangular part lying flat on the table; coordinates are centred on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub width_mm: f64,
    pub height_mm: f64,
    /// Raster resolution of the stored texture.
    pub mm_per_px: f64,
    #[serde(flatten)]
    pub kind: TextureKind,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            width_mm: 160.0,
            height_mm: 120.0,
            mm_per_px: 0.25,
            kind: TextureKind::Procedural {
                seed: 1,
                checker_mm: 10.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    spec: TextureSpec,
    raster: ImageFrame,
}

/// Smooth noise on a square lattice of random values.
struct ValueNoise {
    spacing: f64,
    cols: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(width: f64, height: f64, spacing: f64, rng: &mut ChaCha8Rng) -> Self {
        let cols = (width / spacing).ceil() as usize + 2;
        let rows = (height / spacing).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { spacing, cols, values }
    }

    /// `x`, `y` measured from the lattice origin.
    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (i, j) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(gx - gx.floor()), smooth(gy - gy.floor()));
        let v = |a: usize, b: usize| self.values[b * self.cols + a];
        let top = v(i, j) * (1.0 - fx) + v(i + 1, j) * fx;
        let bottom = v(i, j + 1) * (1.0 - fx) + v(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

impl Texture {
    pub fn new(spec: TextureSpec) -> Result<Self, SimError> {
        if !(spec.width_mm > 0.0 && spec.height_mm > 0.0 && spec.mm_per_px > 0.0) {
            return Err(SimError::InvalidConfig(
                "texture size and resolution must be positive".into(),
            ));
        }
        let w = (spec.width_mm / spec.mm_per_px).round().max(2.0) as u32;
        let h = (spec.height_mm / spec.mm_per_px).round().max(2.0) as u32;
        let raster = match spec.kind {
            TextureKind::Constant { value } => ImageFrame::filled(w, h, value),
            TextureKind::Procedural { seed, checker_mm } => {
                if !(checker_mm > 0.0) {
                    return Err(SimError::InvalidConfig("checker size must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let coarse = ValueNoise::new(spec.width_mm, spec.height_mm, 8.0, &mut rng);
                let fine = ValueNoise::new(spec.width_mm, spec.height_mm, 4.0, &mut rng);
                // Breaks the aperture problem along checker edges.
                let grain = ValueNoise::new(spec.width_mm, spec.height_mm, 1.2, &mut rng);
                let k = std::f64::consts::PI / checker_mm;
                ImageFrame::from_fn(w, h, |i, j| {
                    let x = (i as f64 + 0.5) * spec.mm_per_px;
                    let y = (j as f64 + 0.5) * spec.mm_per_px;
                    let checker = (3.0 * (k * x).sin() * (k * y).sin()).tanh();
                    let v =
                        128.0 + 45.0 * checker + 35.0 * coarse.at(x, y) + 20.0 * fine.at(x, y) + 30.0 * grain.at(x, y);
                    v.round().clamp(0.0, 255.0) as u8
                })
            }
        };
        Ok(Self { spec, raster })
    }

    pub fn spec(&self) -> &TextureSpec {
        &self.spec
    }

    /// Whether a part-centred point lies on the part.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.spec.width_mm / 2.0 && y.abs() <= self.spec.height_mm / 2.0
    }

    /// Bilinear intensity at a part-centred point, or `None` off the part.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains(x, y) {
            return None;
        }
        let s = self.spec.mm_per_px;
        let (w, h) = (self.raster.width() as usize, self.raster.height() as usize);
        let px = ((x + self.spec.width_mm / 2.0) / s - 0.5).clamp(0.0, (w - 1) as f64);
        let py = ((y + self.spec.height_mm / 2.0) / s - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (px.floor() as usize, py.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (px - x0 as f64, py - y0 as f64);
        let p = self.raster.pixels();
        let v = |a: usize, b: usize| p[b * w + a] as f64;
        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}
