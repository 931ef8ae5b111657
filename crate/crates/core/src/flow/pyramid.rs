use crate::raster::ImageFrame;

/// One pyramid level: intensities in `[0, 1]` and their Scharr gradients.
#[derive(Clone, Debug)]
pub struct Level {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f32>,
    pub grad_x: Vec<f32>,
    pub grad_y: Vec<f32>,
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

impl Level {
    fn new(width: usize, height: usize, image: Vec<f32>) -> Self {
        let (grad_x, grad_y) = scharr(width, height, &image);
        Self {
            width,
            height,
            image,
            grad_x,
            grad_y,
        }
    }

    fn at(&self, buf: &[f32], x: isize, y: isize) -> f32 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        buf[yi * self.width + xi]
    }

    /// Bilinear sample of `buf` (one of this level's planes) with clamped
    /// borders; integer coordinates are pixel centres.
    pub fn sample(&self, buf: &[f32], x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at(buf, xi, yi) as f64;
        let b = self.at(buf, xi + 1, yi) as f64;
        let c = self.at(buf, xi, yi + 1) as f64;
        let d = self.at(buf, xi + 1, yi + 1) as f64;
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }
}

/// Scharr derivative normalized to intensity change per pixel.
fn scharr(w: usize, h: usize, img: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let px = |x: isize, y: isize| img[reflect(y, h) * w + reflect(x, w)];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = 3.0 * (px(x + 1, y - 1) - px(x - 1, y - 1))
                + 10.0 * (px(x + 1, y) - px(x - 1, y))
                + 3.0 * (px(x + 1, y + 1) - px(x - 1, y + 1));
            let dy = 3.0 * (px(x - 1, y + 1) - px(x - 1, y - 1))
                + 10.0 * (px(x, y + 1) - px(x, y - 1))
                + 3.0 * (px(x + 1, y + 1) - px(x + 1, y - 1));
            gx[y as usize * w + x as usize] = dx / 32.0;
            gy[y as usize * w + x as usize] = dy / 32.0;
        }
    }
    (gx, gy)
}

const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// 5-tap binomial blur followed by dropping odd rows and columns, so that
/// pixel `(x, y)` of the result sits at `(2x, 2y)` of the input.
fn downsample(w: usize, h: usize, img: &[f32]) -> (usize, usize, Vec<f32>) {
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, c) in BINOMIAL.iter().enumerate() {
                acc += c * img[y * w + reflect(x as isize + k as isize - 2, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0f32; nw * nh];
    for y in 0..nh {
        for x in 0..nw {
            let mut acc = 0.0;
            for (k, c) in BINOMIAL.iter().enumerate() {
                acc += c * tmp[reflect(2 * y as isize + k as isize - 2, h) * w + 2 * x];
            }
            out[y * nw + x] = acc;
        }
    }
    (nw, nh, out)
}

/// Gaussian-like image pyramid; level 0 is the full-resolution frame.
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub levels: Vec<Level>,
}

impl Pyramid {
    pub fn new(frame: &ImageFrame, levels: usize) -> Self {
        let (mut w, mut h) = (frame.width() as usize, frame.height() as usize);
        let mut img: Vec<f32> = frame.pixels().iter().map(|&p| p as f32 / 255.0).collect();
        let mut out = Vec::with_capacity(levels.max(1));
        for l in 0..levels.max(1) {
            if l > 0 {
                let (nw, nh, next) = downsample(w, h, &img);
                w = nw;
                h = nh;
                img = next;
            }
            out.push(Level::new(w, h, img.clone()));
        }
        Self { levels: out }
    }

    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn height(&self) -> usize {
        self.levels[0].height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_gradient_at_all_levels() {
        let f = ImageFrame::filled(37, 29, 120);
        let p = Pyramid::new(&f, 3);
        assert_eq!(p.levels.len(), 3);
        assert_eq!((p.levels[1].width, p.levels[1].height), (19, 15));
        for l in &p.levels {
            assert!(l.grad_x.iter().chain(&l.grad_y).all(|g| g.abs() < 1e-6));
            assert!(l.image.iter().all(|v| (v - 120.0 / 255.0).abs() < 1e-6));
        }
    }

    #[test]
    fn ramp_gradient_is_per_pixel_slope() {
        let f = ImageFrame::from_fn(40, 20, |x, _| (x * 5) as u8);
        let p = Pyramid::new(&f, 1);
        let l = &p.levels[0];
        let g = l.grad_x[10 * 40 + 20] as f64;
        assert!((g - 5.0 / 255.0).abs() < 1e-6);
        assert!(l.grad_y[10 * 40 + 20].abs() < 1e-7);
    }

    #[test]
    fn bilinear_interpolates_between_centres() {
        let f = ImageFrame::from_fn(4, 4, |x, y| (x * 10 + y * 40) as u8);
        let p = Pyramid::new(&f, 1);
        let l = &p.levels[0];
        let v = l.sample(&l.image, 1.5, 2.25) * 255.0;
        assert!((v - (15.0 + 90.0)).abs() < 1e-4);
    }
}
