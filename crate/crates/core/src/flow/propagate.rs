use serde::{Deserialize, Serialize};

use super::lk::{track_pyramids, TrackParams, TrackStatus};
use super::pyramid::Pyramid;
use super::FlowError;
use crate::annotate::{Annotation, ShapeKind};
use crate::geom::Pixel;
use crate::raster::ImageFrame;
use crate::shape::bounding_box;

/// Fraction of lost points above which a frame gets no annotation.
pub const MAX_LOST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    /// One annotation per frame that kept enough tracked points, starting
    /// with the input annotation.
    pub annotations: Vec<Annotation>,
    /// Frame indices for which no annotation was emitted.
    pub gaps: Vec<u64>,
}

/// Chains frame-to-frame tracking of the annotation's points over `seq`.
/// A box follows its two corners and is rebuilt from their extent. Frames
/// where more than 20% of the points are lost are skipped, and lost points
/// never reappear in later frames.
pub fn propagate_annotation(
    seq: &[ImageFrame],
    annotation: &Annotation,
    params: &TrackParams,
) -> Result<Propagation, FlowError> {
    let first = seq.first().ok_or(FlowError::EmptySequence)?;
    if annotation.frame_index != first.frame_index {
        return Err(FlowError::FrameIndexMismatch {
            annotation: annotation.frame_index,
            sequence: first.frame_index,
        });
    }
    for f in seq {
        first.same_size(f)?;
    }
    let (w, h) = (first.width() as f64, first.height() as f64);
    if annotation
        .points
        .iter()
        .any(|p| !(p.u >= 0.0 && p.v >= 0.0 && p.u <= w - 1.0 && p.v <= h - 1.0))
    {
        return Err(FlowError::AnnotationOutOfFrame);
    }

    let mut points = annotation.points.clone();
    let mut alive = vec![true; points.len()];
    let mut out = Propagation {
        annotations: vec![annotation.clone()],
        gaps: Vec::new(),
    };
    let mut prev = Pyramid::new(first, params.levels);
    for frame in &seq[1..] {
        let next = Pyramid::new(frame, params.levels);
        let live: Vec<usize> = (0..points.len()).filter(|&i| alive[i]).collect();
        let query: Vec<Pixel<f64>> = live.iter().map(|&i| points[i]).collect();
        let state = track_pyramids(&prev, &next, &query, params);
        for (k, &i) in live.iter().enumerate() {
            points[i] = state.points[k];
            if state.status[k] != TrackStatus::Tracked {
                alive[i] = false;
            }
        }
        prev = next;

        let lost = alive.iter().filter(|a| !**a).count();
        let emitted = if (lost as f64) <= MAX_LOST_FRACTION * points.len() as f64 {
            rebuild(annotation, &points, &alive, frame.frame_index)
        } else {
            None
        };
        match emitted {
            Some(a) => out.annotations.push(a),
            None => {
                tracing::info!(frame = frame.frame_index, lost, "annotation gap");
                out.gaps.push(frame.frame_index);
            }
        }
    }
    Ok(out)
}

fn rebuild(template: &Annotation, points: &[Pixel<f64>], alive: &[bool], frame_index: u64) -> Option<Annotation> {
    let kept: Vec<Pixel<f64>> = points.iter().zip(alive).filter(|(_, a)| **a).map(|(p, _)| *p).collect();
    let shape_points = match template.kind {
        ShapeKind::Bbox => {
            let (lo, hi) = bounding_box(&kept)?;
            vec![lo, hi]
        }
        _ => kept,
    };
    Annotation::new(
        template.id,
        template.label.clone(),
        template.kind,
        shape_points,
        frame_index,
    )
    .ok()
}
