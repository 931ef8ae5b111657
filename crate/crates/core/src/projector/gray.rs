use serde::{Deserialize, Serialize};

use super::ProjectorError;
use crate::raster::ImageFrame;

/// Reflected binary code of `index` on `bit_count` bits.
pub fn gray_encode(index: u32, bit_count: u32) -> Result<u32, ProjectorError> {
    if bit_count > 31 || index >= (1u32 << bit_count) {
        return Err(ProjectorError::OutOfRange { index, bit_count });
    }
    Ok(index ^ (index >> 1))
}

/// Inverse of [`gray_encode`].
pub fn gray_decode(code: u32) -> u32 {
    let mut value = code;
    let mut shift = code >> 1;
    while shift != 0 {
        value ^= shift;
        shift >>= 1;
    }
    value
}

/// Bits of a code word, most significant first.
pub fn code_bits(code: u32, bit_count: u32) -> Vec<bool> {
    (0..bit_count).rev().map(|b| (code >> b) & 1 == 1).collect()
}

/// Code word from bits given most significant first.
pub fn bits_to_code(bits: &[bool]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Column,
    Row,
}

/// Gray-code stripe patterns for one projector axis. Pattern images are
/// generated on demand; bit 0 is the most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayCodeSequence {
    pub axis: Axis,
    pub bit_count: u32,
    pub width: u32,
    pub height: u32,
}

impl GrayCodeSequence {
    /// Sequence covering the projector extent along `axis` with
    /// `ceil(log2(extent))` bits.
    pub fn new(axis: Axis, width: u32, height: u32) -> Self {
        let extent = match axis {
            Axis::Column => width,
            Axis::Row => height,
        };
        let bit_count = (u32::BITS - extent.saturating_sub(1).leading_zeros()).max(1);
        Self {
            axis,
            bit_count,
            width,
            height,
        }
    }

    pub fn extent(&self) -> u32 {
        match self.axis {
            Axis::Column => self.width,
            Axis::Row => self.height,
        }
    }

    /// Number of projected frames, each pattern followed by its inverse.
    pub fn pattern_count(&self) -> usize {
        2 * self.bit_count as usize
    }

    /// Whether projector coordinate `coord` is lit in the non-inverted
    /// pattern of `bit`.
    pub fn lit(&self, bit: u32, coord: u32) -> bool {
        let code = coord ^ (coord >> 1);
        (code >> (self.bit_count - 1 - bit)) & 1 == 1
    }

    /// Pattern `bit`, or its inverse, as a projector-resolution frame.
    pub fn pattern(&self, bit: u32, inverse: bool) -> ImageFrame {
        ImageFrame::from_fn(self.width, self.height, |x, y| {
            let coord = match self.axis {
                Axis::Column => x,
                Axis::Row => y,
            };
            if self.lit(bit, coord) != inverse {
                255
            } else {
                0
            }
        })
        .with_index(2 * bit as u64 + inverse as u64)
    }

    /// All `2·bit_count` frames in projection order.
    pub fn patterns(&self) -> Vec<ImageFrame> {
        (0..self.bit_count)
            .flat_map(|b| [self.pattern(b, false), self.pattern(b, true)])
            .collect()
    }
}
