//! Session state and the events that drive it. The service and the CLI
//! rebuild a session by replaying its event log through [`Session::apply`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use insitu_core::annotate::{
    append_sample, append_world_point, finalize_shape, simplify, AnnotateError, Annotation, ShapeKind, Trajectory,
    DEFAULT_SIMPLIFY_EPSILON_MM,
};
use insitu_core::bundle::CalibrationBundle;
use insitu_core::export::{Dataset, DatasetFrame, LabeledShape};
use insitu_core::flow::Propagation;
use insitu_core::geom::{Frame, Pixel, Plane, Point3};
use insitu_core::sample::TrackedSample;
use insitu_core::sim::{MotionStep, PointerModel, Scenario};

use crate::error::ApiError;

/// Frame index of the stationary reference view that stage-one annotations
/// are drawn on; captures start from it.
pub const REFERENCE_FRAME: u64 = 0;

/// Upper bound on frames per capture.
pub const MAX_CAPTURE_FRAMES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Annotating,
    Capturing,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub name: String,
    pub labels: Vec<String>,
    pub bundle: CalibrationBundle<f64>,
    /// Simulated rig and scene used for frames.
    pub scenario: Scenario,
    /// Tip position in the pointer frame, mm.
    pub tip_offset: [f64; 3],
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ApiError> {
        if self.labels.is_empty() {
            return Err(ApiError::malformed("label catalog is empty"));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if l.trim().is_empty() {
                return Err(ApiError::malformed("labels must be non-empty"));
            }
            if self.labels[..i].contains(l) {
                return Err(ApiError::malformed(format!("duplicate label `{l}`")));
            }
        }
        if !self.tip_offset.iter().all(|v| v.is_finite()) {
            return Err(ApiError::malformed("tip offset must be finite"));
        }
        self.bundle.validate()?;
        Ok(())
    }
}

/// Default pointer tip offset of the simulated pointer.
pub fn default_tip_offset() -> [f64; 3] {
    PointerModel::default().tip_offset
}

/// A tracker sample or a cursor position on the camera image, plus the pen
/// flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInput {
    pub pen_down: bool,
    #[serde(flatten)]
    pub source: SampleSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSource {
    /// Camera pixel, unprojected onto the table.
    Cursor {
        timestamp: f64,
        pixel: [f64; 2],
    },
    Tracked(TrackedSample<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameSource {
    /// Renders the session scenario; `step` overrides its motion script with
    /// a constant per-frame step.
    Sim {
        frames: usize,
        #[serde(default)]
        step: Option<MotionStep>,
    },
    /// Reads `frame_NNNNNN.pgm` files from a directory on the server.
    Directory { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureResult {
    /// Indices of all captured frames.
    pub frames: Vec<u64>,
    /// One propagation per stage-one annotation, in annotation order.
    pub propagations: Vec<Propagation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Created {
        id: String,
        config: SessionConfig,
    },
    Samples {
        items: Vec<SampleInput>,
    },
    TrajectoryCleared,
    Annotated {
        annotation: Annotation,
    },
    CaptureStarted {
        source: FrameSource,
    },
    CaptureFinished {
        result: CaptureResult,
    },
    CaptureFailed {
        message: String,
        #[serde(default)]
        frames: usize,
        #[serde(default)]
        done: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapturePhase {
    Idle,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureStatus {
    pub phase: CapturePhase,
    pub done: usize,
    pub total: usize,
    /// Frames captured so far.
    pub frames: usize,
    /// `(annotation id, frame index)` pairs with no propagated shape.
    pub gaps: Vec<(u64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Default for CaptureStatus {
    fn default() -> Self {
        Self {
            phase: CapturePhase::Idle,
            done: 0,
            total: 0,
            frames: 0,
            gaps: Vec::new(),
            error: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub accepted: usize,
    /// Samples the tracker flagged invalid; they are skipped.
    pub rejected: usize,
    pub trajectory_length: usize,
    /// Projector pixel lighting the latest accepted tip.
    pub overlay: Option<Pixel<f64>>,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub state: SessionState,
    pub trajectory: Trajectory,
    /// Projector pixel per trajectory point.
    pub overlay: Vec<Pixel<f64>>,
    pub annotations: Vec<Annotation>,
    pub capture: CaptureStatus,
    pub result: Option<CaptureResult>,
}

impl Session {
    /// Builds a session from its `Created` event.
    pub fn create(event: &Event) -> Result<Self, ApiError> {
        let Event::Created { id, config } = event else {
            return Err(ApiError::internal("event log must start with `created`"));
        };
        config.validate()?;
        Ok(Self {
            id: id.clone(),
            config: config.clone(),
            state: SessionState::Annotating,
            trajectory: Trajectory::new(),
            overlay: Vec::new(),
            annotations: Vec::new(),
            capture: CaptureStatus::default(),
            result: None,
        })
    }

    /// Replays a full event log.
    pub fn replay(events: &[Event]) -> Result<Self, ApiError> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| ApiError::internal("empty event log"))?;
        let mut s = Self::create(first)?;
        for e in rest {
            s.apply(e)?;
        }
        Ok(s)
    }

    fn require(&self, state: SessionState, action: &str) -> Result<(), ApiError> {
        if self.state != state {
            return Err(ApiError::invalid_state(format!(
                "cannot {action} while the session is {}",
                self.state_name()
            )));
        }
        Ok(())
    }

    pub fn state_name(&self) -> &'static str {
        match self.state {
            SessionState::Annotating => "annotating",
            SessionState::Capturing => "capturing",
            SessionState::Closed => "closed",
        }
    }

    /// Applies one event. On error the session is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), ApiError> {
        match event {
            Event::Created { .. } => Err(ApiError::invalid_state("session already exists")),
            Event::Samples { items } => self.ingest(items).map(|_| ()),
            Event::TrajectoryCleared => {
                self.require(SessionState::Annotating, "clear the trajectory")?;
                self.trajectory.clear();
                self.overlay.clear();
                Ok(())
            }
            Event::Annotated { annotation } => {
                self.require(SessionState::Annotating, "finalize annotations")?;
                self.annotations.push(annotation.clone());
                self.trajectory.clear();
                self.overlay.clear();
                Ok(())
            }
            Event::CaptureStarted { source } => {
                self.check_capture(source)?;
                self.state = SessionState::Capturing;
                let frames = match source {
                    FrameSource::Sim { frames, .. } => *frames,
                    FrameSource::Directory { .. } => 0,
                };
                self.capture = CaptureStatus {
                    phase: CapturePhase::Running,
                    total: frames + self.annotations.len(),
                    ..CaptureStatus::default()
                };
                Ok(())
            }
            Event::CaptureFinished { result } => {
                self.require(SessionState::Capturing, "finish a capture")?;
                self.capture.phase = CapturePhase::Done;
                self.capture.frames = result.frames.len();
                self.capture.total = result.frames.len() + self.annotations.len();
                self.capture.done = self.capture.total;
                self.capture.gaps = result
                    .propagations
                    .iter()
                    .zip(&self.annotations)
                    .flat_map(|(p, a)| p.gaps.iter().map(move |g| (a.id, *g)))
                    .collect();
                self.result = Some(result.clone());
                self.state = SessionState::Closed;
                Ok(())
            }
            Event::CaptureFailed { message, frames, done } => {
                self.require(SessionState::Capturing, "fail a capture")?;
                self.capture.phase = CapturePhase::Failed;
                self.capture.frames = *frames;
                self.capture.done = *done;
                self.capture.error = Some(message.clone());
                self.state = SessionState::Closed;
                Ok(())
            }
        }
    }

    /// Appends a batch of samples in order. Either the whole batch is
    /// applied or, on the first hard error, none of it.
    pub fn ingest(&mut self, items: &[SampleInput]) -> Result<SampleOutcome, ApiError> {
        self.require(SessionState::Annotating, "add samples")?;
        let bundle = &self.config.bundle;
        let tip = Point3::new(
            Frame::Pointer,
            self.config.tip_offset[0],
            self.config.tip_offset[1],
            self.config.tip_offset[2],
        );
        let mut trajectory = self.trajectory.clone();
        let mut overlay = Vec::new();
        let mut rejected = 0;
        for (i, item) in items.iter().enumerate() {
            let r = match &item.source {
                SampleSource::Tracked(s) => append_sample(&mut trajectory, s, item.pen_down, bundle, &tip),
                SampleSource::Cursor { timestamp, pixel } => cursor_to_world(bundle, pixel)
                    .and_then(|p| append_world_point(&mut trajectory, *timestamp, &p, item.pen_down, bundle)),
            };
            match r {
                Ok(px) => overlay.push(px),
                Err(AnnotateError::InvalidSample(_)) if matches!(item.source, SampleSource::Tracked(s) if !s.valid) => {
                    rejected += 1
                }
                Err(e) => {
                    let mut err = ApiError::from(e);
                    err.message = format!("sample {i}: {}", err.message);
                    return Err(err);
                }
            }
        }
        self.trajectory = trajectory;
        self.overlay.extend(&overlay);
        Ok(SampleOutcome {
            accepted: overlay.len(),
            rejected,
            trajectory_length: self.trajectory.len(),
            overlay: self.overlay.last().copied(),
        })
    }

    /// Simplifies the live trajectory and converts it into a shape on the
    /// reference frame. Does not modify the session.
    pub fn finalize(&self, kind: ShapeKind, label: &str, epsilon_mm: Option<f64>) -> Result<Annotation, ApiError> {
        self.require(SessionState::Annotating, "finalize annotations")?;
        if !self.config.labels.iter().any(|l| l == label) {
            return Err(ApiError::new(
                axum::http::StatusCode::UNPROCESSABLE_ENTITY,
                "unknown_label",
                format!("label `{label}` is not in the session catalog"),
            ));
        }
        let eps = epsilon_mm.unwrap_or(DEFAULT_SIMPLIFY_EPSILON_MM);
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(ApiError::malformed("epsilon_mm must be finite and non-negative"));
        }
        if self.trajectory.pen_down_tips().is_empty() {
            return Err(AnnotateError::EmptyTrajectory.into());
        }
        let simplified = simplify(&self.trajectory, eps)?;
        let id = self.annotations.last().map(|a| a.id + 1).unwrap_or(1);
        Ok(finalize_shape(
            &simplified,
            kind,
            &self.config.bundle,
            label,
            REFERENCE_FRAME,
            id,
        )?)
    }

    pub fn check_capture(&self, source: &FrameSource) -> Result<(), ApiError> {
        self.require(SessionState::Annotating, "start a capture")?;
        if self.annotations.is_empty() {
            return Err(ApiError::invalid_state(
                "capture needs at least one finalized annotation",
            ));
        }
        match source {
            FrameSource::Sim { frames, .. } if *frames == 0 || *frames > MAX_CAPTURE_FRAMES => Err(
                ApiError::malformed(format!("frames must be between 1 and {MAX_CAPTURE_FRAMES}")),
            ),
            FrameSource::Directory { path } if path.is_empty() => Err(ApiError::malformed("empty directory path")),
            _ => Ok(()),
        }
    }

    /// Camera-pixel positions of the live trajectory.
    pub fn trajectory_in_camera(&self) -> Vec<Pixel<f64>> {
        self.trajectory
            .points()
            .iter()
            .filter_map(|p| {
                self.config
                    .bundle
                    .world_to_camera_pixel(&Point3::from_vector(Frame::World, p.tip))
                    .ok()
            })
            .collect()
    }

    pub fn latest_tip(&self) -> Option<Vector3<f64>> {
        self.trajectory.points().last().map(|p| p.tip)
    }

    /// Annotations shown on frame `index`: propagated ones after a capture,
    /// stage-one ones before.
    pub fn annotations_on(&self, index: u64) -> Vec<Annotation> {
        match &self.result {
            Some(r) => r
                .propagations
                .iter()
                .flat_map(|p| p.annotations.iter().filter(|a| a.frame_index == index).cloned())
                .collect(),
            None if index == REFERENCE_FRAME => self.annotations.clone(),
            None => Vec::new(),
        }
    }

    /// Dataset of the session: every captured frame with its propagated
    /// shapes, or the reference frame alone before a capture.
    pub fn dataset(&self) -> Dataset {
        let cam = &self.config.bundle.camera;
        let mut ds = Dataset::new(self.config.name.clone(), self.config.labels.clone());
        let indices: Vec<u64> = match &self.result {
            Some(r) => r.frames.clone(),
            None if !self.annotations.is_empty() => vec![REFERENCE_FRAME],
            None => Vec::new(),
        };
        for i in indices {
            ds.frames.push(DatasetFrame {
                image: image_name(i),
                width: cam.width,
                height: cam.height,
                annotations: self.annotations_on(i).iter().map(LabeledShape::from).collect(),
            });
        }
        ds
    }
}

/// Image file name of frame `index` in exports.
pub fn image_name(index: u64) -> String {
    format!("images/frame_{index:06}.png")
}

/// Unprojects a camera pixel onto the table plane `z = 0`.
pub fn cursor_to_world(bundle: &CalibrationBundle<f64>, pixel: &[f64; 2]) -> Result<Point3<f64>, AnnotateError> {
    if !pixel.iter().all(|v| v.is_finite()) {
        return Err(AnnotateError::InvalidSample("cursor pixel must be finite".into()));
    }
    let t = &bundle.camera_from_world;
    let table = Plane::new(Frame::Camera, *t.translation(), t.rotation() * Vector3::z());
    let p = bundle
        .camera
        .unproject_to_plane(&Pixel::new(pixel[0], pixel[1]), &table)?;
    Ok(t.inverse().transform_point(&p)?)
}
