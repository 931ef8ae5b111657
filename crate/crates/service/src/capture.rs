//! Stage-two capture: acquire the frame sequence and propagate every
//! stage-one annotation through it.

use std::path::Path;
use std::sync::Arc;

use insitu_core::flow::{propagate_annotation, TrackParams};
use insitu_core::raster::{read_sequence, sequence_file_name, ImageFrame};
use insitu_core::sim::{Renderer, Scenario, Scene};

use crate::error::ApiError;
use crate::session::{CaptureResult, FrameSource, Session, REFERENCE_FRAME};

/// Scene of a capture: the scenario's scene, optionally with its motion
/// script replaced.
pub fn capture_scene(scenario: &Scenario, source: &FrameSource) -> Result<Option<Scene>, ApiError> {
    match source {
        FrameSource::Sim { frames, step } => {
            let mut cfg = scenario.scene.clone();
            match step {
                Some(s) => cfg = cfg.with_constant_motion(*s, *frames),
                None => cfg.motion.truncate(frames.saturating_sub(1)),
            }
            Ok(Some(Scene::new(cfg)?))
        }
        FrameSource::Directory { .. } => Ok(None),
    }
}

/// Progress callback: `(frames acquired, annotations propagated)`.
pub type Progress<'a> = dyn FnMut(usize, usize) + 'a;

/// Runs a capture for a snapshot of the session. Frames are written to
/// `frames_dir` as they are acquired.
pub fn run_capture(
    session: &Session,
    source: &FrameSource,
    renderer: Option<Arc<Renderer>>,
    frames_dir: &Path,
    progress: &mut Progress<'_>,
) -> Result<CaptureResult, ApiError> {
    std::fs::create_dir_all(frames_dir)?;
    let frames: Vec<ImageFrame> = match source {
        FrameSource::Sim { frames, .. } => {
            let scene = capture_scene(&session.config.scenario, source)?.expect("sim source");
            let renderer = match renderer {
                Some(r) => r,
                None => Arc::new(Renderer::new(&session.config.scenario.rig, scene.config.supersample)?),
            };
            let mut out = Vec::with_capacity(*frames);
            for k in 0..*frames {
                let f = renderer.render(&scene, k, None).with_index(REFERENCE_FRAME + k as u64);
                f.write_pgm(&frames_dir.join(sequence_file_name(f.frame_index)))?;
                out.push(f);
                progress(out.len(), 0);
            }
            out
        }
        FrameSource::Directory { path } => {
            let seq = read_sequence(Path::new(path))?;
            let cam = &session.config.bundle.camera;
            if seq.is_empty() {
                return Err(ApiError::malformed(format!("no frames in `{path}`")));
            }
            for f in &seq {
                if (f.width(), f.height()) != (cam.width, cam.height) {
                    return Err(ApiError::malformed(format!(
                        "frame {} is {}x{}, camera is {}x{}",
                        f.frame_index,
                        f.width(),
                        f.height(),
                        cam.width,
                        cam.height
                    )));
                }
                f.write_pgm(&frames_dir.join(sequence_file_name(f.frame_index)))?;
            }
            progress(seq.len(), 0);
            seq
        }
    };
    let params = TrackParams::default();
    let mut propagations = Vec::with_capacity(session.annotations.len());
    for (i, a) in session.annotations.iter().enumerate() {
        let mut a = a.clone();
        a.frame_index = frames[0].frame_index;
        propagations.push(propagate_annotation(&frames, &a, &params)?);
        progress(frames.len(), i + 1);
    }
    Ok(CaptureResult {
        frames: frames.iter().map(|f| f.frame_index).collect(),
        propagations,
    })
}

/// Image of frame `index`: the stored capture frame if present, else a
/// render of the session scenario.
pub fn frame_image(
    session: &Session,
    frames_dir: &Path,
    index: u64,
    renderer: &Renderer,
    pointer: Option<&nalgebra::Vector3<f64>>,
) -> Result<ImageFrame, ApiError> {
    let path = frames_dir.join(sequence_file_name(index));
    if path.exists() {
        return Ok(ImageFrame::read_pgm(&path, index)?);
    }
    let scene = Scene::new(session.config.scenario.scene.clone())?;
    Ok(renderer.render(&scene, index as usize, pointer).with_index(index))
}
