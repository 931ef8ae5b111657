//! On-disk layout of a projector calibration capture:
//!
//! ```text
//! <dir>/scene.json
//! <dir>/view_000/column_00_pattern.pgm
//! <dir>/view_000/column_00_inverse.pgm
//! ...
//! <dir>/view_000/row_10_inverse.pgm
//! ```
//!
//! `scene.json` names the board, the projector resolution and, per view, the
//! detected camera corners and the camera pixel of the images' top-left
//! corner (captures may be cropped to the board).

use std::path::Path;

use anyhow::Context;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use insitu_core::projector::{decode_correspondences, Axis, GrayCodeSequence, ProjectorView};
use insitu_core::raster::ImageFrame;
use insitu_core::sim::Checkerboard;

pub const SCENE_FILE: &str = "scene.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureScene {
    pub projector_width: u32,
    pub projector_height: u32,
    pub board: Checkerboard,
    pub views: Vec<CaptureView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureView {
    /// Subdirectory holding the view's images.
    pub dir: String,
    #[serde(default)]
    pub origin: [u32; 2],
    pub camera_corners: Vec<[f64; 2]>,
}

impl CaptureScene {
    pub fn sequences(&self) -> [GrayCodeSequence; 2] {
        [Axis::Column, Axis::Row].map(|a| GrayCodeSequence::new(a, self.projector_width, self.projector_height))
    }
}

pub fn pattern_file(axis: Axis, bit: u32, inverse: bool) -> String {
    let axis = match axis {
        Axis::Column => "column",
        Axis::Row => "row",
    };
    format!("{axis}_{bit:02}_{}.pgm", if inverse { "inverse" } else { "pattern" })
}

/// Writes one view's (pattern, inverse) captures for one axis.
pub fn write_captures(view_dir: &Path, axis: Axis, captures: &[(ImageFrame, ImageFrame)]) -> anyhow::Result<()> {
    std::fs::create_dir_all(view_dir)?;
    for (bit, (p, q)) in captures.iter().enumerate() {
        p.write_pgm(&view_dir.join(pattern_file(axis, bit as u32, false)))?;
        q.write_pgm(&view_dir.join(pattern_file(axis, bit as u32, true)))?;
    }
    Ok(())
}

pub fn read_scene(dir: &Path) -> anyhow::Result<CaptureScene> {
    let path = dir.join(SCENE_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Decodes every view of a capture directory.
pub fn load_views(dir: &Path, scene: &CaptureScene, threshold: u8) -> anyhow::Result<Vec<ProjectorView>> {
    let plane_points = scene.board.corners();
    let [cols, rows] = scene.sequences();
    scene
        .views
        .iter()
        .map(|v| {
            let view_dir = dir.join(&v.dir);
            let decode = |seq: &GrayCodeSequence| -> anyhow::Result<_> {
                let captures = (0..seq.bit_count)
                    .map(|bit| {
                        let read = |inverse| {
                            let path = view_dir.join(pattern_file(seq.axis, bit, inverse));
                            ImageFrame::read_pgm(&path, 0).with_context(|| format!("reading {}", path.display()))
                        };
                        Ok((read(false)?, read(true)?))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?;
                decode_correspondences(&captures, seq, threshold).with_context(|| format!("decoding {}", v.dir))
            };
            if v.camera_corners.len() != plane_points.len() {
                anyhow::bail!(
                    "{}: {} corners listed, the board has {}",
                    v.dir,
                    v.camera_corners.len(),
                    plane_points.len()
                );
            }
            Ok(ProjectorView {
                plane_points: plane_points.clone(),
                camera_corners: v.camera_corners.iter().map(|c| Vector2::new(c[0], c[1])).collect(),
                map_u: decode(&cols)?,
                map_v: decode(&rows)?,
                map_origin: v.origin,
            })
        })
        .collect()
}
