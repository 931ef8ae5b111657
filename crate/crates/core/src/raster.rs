//! 8-bit grayscale frames and PGM/PNG serialization.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("pixel buffer has {found} bytes, expected {expected}")]
    BufferSize { expected: usize, found: usize },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("frame must have non-zero dimensions")]
    Empty,
    #[error("image codec: {0}")]
    Codec(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for RasterError {
    fn from(e: std::io::Error) -> Self {
        RasterError::Io(e.to_string())
    }
}

impl From<image::ImageError> for RasterError {
    fn from(e: image::ImageError) -> Self {
        RasterError::Codec(e.to_string())
    }
}

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub frame_index: u64,
}

impl std::fmt::Debug for ImageFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("frame_index", &self.frame_index)
            .finish_non_exhaustive()
    }
}

impl ImageFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, frame_index: u64) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty);
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                found: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            frame_index,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "frame must have non-zero dimensions");
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
            frame_index: 0,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut frame = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                frame.pixels[(y * width + x) as usize] = f(x, y);
            }
        }
        frame
    }

    pub fn with_index(mut self, frame_index: u64) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    pub fn same_size(&self, other: &Self) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Applies `f` to every pixel value.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
            ..self.clone()
        }
    }

    fn gray_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer size checked at construction")
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&self.pixels, self.width, self.height, ExtendedColorType::L8)
            .expect("in-memory PGM encoding");
        out
    }

    pub fn from_pgm(bytes: &[u8], frame_index: u64) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw(), frame_index)
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.gray_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    pub fn from_png(bytes: &[u8], frame_index: u64) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw(), frame_index)
    }

    pub fn read_pgm(path: &Path, frame_index: u64) -> Result<Self, RasterError> {
        Self::from_pgm(&std::fs::read(path)?, frame_index)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// File name of frame `index` in a sequence directory.
pub fn sequence_file_name(index: u64) -> String {
    format!("frame_{index:06}.pgm")
}

/// Writes `frames` as `frame_%06d.pgm` using each frame's index.
pub fn write_sequence(dir: &Path, frames: &[ImageFrame]) -> Result<(), RasterError> {
    std::fs::create_dir_all(dir)?;
    for f in frames {
        f.write_pgm(&dir.join(sequence_file_name(f.frame_index)))?;
    }
    Ok(())
}

/// Reads every `frame_NNNNNN.pgm` in `dir`, ordered by index.
pub fn read_sequence(dir: &Path) -> Result<Vec<ImageFrame>, RasterError> {
    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("frame_"))
            .and_then(|n| n.strip_suffix(".pgm"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(i) = index {
            entries.push((i, path));
        }
    }
    entries.sort_by_key(|(i, _)| *i);
    entries.into_iter().map(|(i, p)| ImageFrame::read_pgm(&p, i)).collect()
}
