//! `insitu`: calibration, stroke replay, propagation, export and the HTTP
//! service from one binary.

mod calibrate;
mod capture_dir;
mod pivot_csv;
mod sim;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use insitu_core::annotate::{Annotation, ShapeKind};
use insitu_core::bundle::CalibrationBundle;
use insitu_core::export::{write_export, Dataset, ExportFormat};
use insitu_core::flow::{propagate_annotation, TrackParams};
use insitu_core::raster::read_sequence;
use insitu_core::sim::Scenario;
use insitu_service::archive::session_export_files;
use insitu_service::session::{default_tip_offset, Event, SampleInput, Session, SessionConfig};
use insitu_service::store::{load_session, EVENT_LOG, FRAMES_DIR};

#[derive(Parser)]
#[command(name = "insitu", version, about = "Pointer-based in-situ annotation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pivot, camera, world-frame and projector calibration.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Stage one: turn recorded pointer strokes into annotations.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Stage two: carry an annotation through a frame sequence.
    Propagate {
        /// Directory of `frame_%06d.pgm` files.
        #[arg(long)]
        seq: PathBuf,
        /// Annotation JSON on the first frame of the sequence.
        #[arg(long)]
        annotation: PathBuf,
        /// Receives `propagation.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write YOLO, CVAT or JSON files from a dataset JSON or a session
    /// directory of the service.
    Export {
        #[arg(long, value_parser = clap::value_parser!(ExportFormat))]
        format: ExportFormat,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write captured frames as PNG (session directories only).
        #[arg(long)]
        images: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "insitu-data")]
        data_dir: PathBuf,
        /// Calibration bundle used by sessions that do not supply one.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Generate input files from the simulated rig.
    Sim {
        /// Scenario JSON (rig and scene); the nominal rig by default.
        #[arg(long, global = true)]
        scenario: Option<PathBuf>,
        #[arg(long, global = true, default_value_t = 1)]
        seed: u64,
        #[command(subcommand)]
        command: sim::SimCommand,
    },
}

#[derive(Subcommand)]
enum CalibrateCommand {
    /// Tip offset from a CSV of pointer poses pivoting about a fixed point.
    Pivot {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Camera intrinsics from planar views.
    Intrinsics {
        /// JSON `{width, height, views: [{plane_points, image_points}]}`.
        #[arg(long)]
        views: PathBuf,
        /// Bundle to update; a new one is written otherwise.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keep lens distortion at zero.
        #[arg(long)]
        pinhole: bool,
    },
    /// World → camera pose from 3D–2D correspondences, and optionally the
    /// tracker → world transform from circle-grid touches.
    Extrinsics {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        correspondences: PathBuf,
        /// JSON `{grid, touches}`.
        #[arg(long)]
        touches: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projector intrinsics and camera → projector pose from gray-code
    /// captures of a checkerboard.
    Projector {
        /// Capture directory with `scene.json`.
        #[arg(long)]
        captures: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = insitu_core::projector::DEFAULT_DECODE_THRESHOLD)]
        threshold: u8,
        #[arg(long)]
        pinhole: bool,
    },
}

#[derive(Subcommand)]
enum AnnotateCommand {
    /// Replay a JSON-lines sample stream and finalize one shape.
    Replay {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: ShapeKind,
        #[arg(long)]
        label: String,
        /// The nominal rig's bundle by default.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Tip offset in the pointer frame, mm.
        #[arg(long, value_delimiter = ',')]
        tip: Option<Vec<f64>>,
        /// Trajectory simplification tolerance, mm.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Annotation JSON; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<ShapeKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown shape kind `{s}` (bbox, polygon, polyline)"))
}

/// Checks a comma-separated vector argument.
pub(crate) fn triple(name: &str, v: &[f64]) -> anyhow::Result<[f64; 3]> {
    match v {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("--{name} takes three comma-separated values, got {}", v.len()),
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn calibrate(cmd: CalibrateCommand) -> anyhow::Result<()> {
    match cmd {
        CalibrateCommand::Pivot { samples, out } => {
            let r = calibrate::pivot(&samples, &out)?;
            println!(
                "tip offset [{:.3}, {:.3}, {:.3}] mm, rms {:.3} mm over {} samples",
                r.tip_offset.x, r.tip_offset.y, r.tip_offset.z, r.rms_residual, r.sample_count
            );
        }
        CalibrateCommand::Intrinsics {
            views,
            bundle,
            out,
            pinhole,
        } => {
            let b = calibrate::intrinsics(&views, bundle.as_deref(), &out, pinhole)?;
            let c = &b.camera;
            println!(
                "fx {:.2} fy {:.2} cx {:.2} cy {:.2}, rms {:.3} px",
                c.fx, c.fy, c.cx, c.cy, b.reprojection_rms_px
            );
        }
        CalibrateCommand::Extrinsics {
            bundle,
            correspondences,
            touches,
            out,
        } => {
            let b = calibrate::extrinsics(&bundle, &correspondences, touches.as_deref(), &out)?;
            let t = b.camera_from_world.translation();
            println!(
                "camera from world: t [{:.2}, {:.2}, {:.2}] mm, rms {:.3} px",
                t.x, t.y, t.z, b.reprojection_rms_px
            );
        }
        CalibrateCommand::Projector {
            captures,
            bundle,
            out,
            threshold,
            pinhole,
        } => {
            let s = calibrate::projector(&captures, &bundle, &out, threshold, pinhole)?;
            let k = s.bundle.projector.expect("projector set");
            let t = s
                .bundle
                .projector_from_camera
                .as_ref()
                .expect("projector set")
                .translation();
            println!(
                "{} views: fx {:.2} fy {:.2} cx {:.2} cy {:.2}, rms {:.3} px; projector from camera t [{:.2}, {:.2}, {:.2}] mm",
                s.views, k.fx, k.fy, k.cx, k.cy, s.rms_px, t.x, t.y, t.z
            );
        }
    }
    Ok(())
}

fn replay(
    stream: &Path,
    kind: ShapeKind,
    label: String,
    bundle: Option<&Path>,
    tip: Option<Vec<f64>>,
    epsilon: Option<f64>,
) -> anyhow::Result<Annotation> {
    let bundle: CalibrationBundle<f64> = match bundle {
        Some(p) => read_json(p)?,
        None => Scenario::default().rig.bundle(),
    };
    let tip_offset = match tip {
        Some(t) => triple("tip", &t)?,
        None => default_tip_offset(),
    };
    let config = SessionConfig {
        name: "replay".into(),
        labels: vec![label.clone()],
        bundle,
        scenario: Scenario::default(),
        tip_offset,
    };
    let mut session = Session::create(&Event::Created {
        id: "replay".into(),
        config,
    })?;
    let text = std::fs::read_to_string(stream).with_context(|| format!("reading {}", stream.display()))?;
    let items = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<SampleInput>(l).with_context(|| format!("line {}", i + 1)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let outcome = session.ingest(&items)?;
    if outcome.rejected > 0 {
        eprintln!("skipped {} samples flagged invalid", outcome.rejected);
    }
    Ok(session.finalize(kind, &label, epsilon)?)
}

fn propagate(seq: &Path, annotation: &Path, out: &Path) -> anyhow::Result<String> {
    let frames = read_sequence(seq).with_context(|| format!("reading frames from {}", seq.display()))?;
    if frames.is_empty() {
        bail!("no frames in {}", seq.display());
    }
    let ann: Annotation = read_json(annotation)?;
    let p = propagate_annotation(&frames, &ann, &TrackParams::default())?;
    std::fs::create_dir_all(out)?;
    write_json(
        &out.join("propagation.json"),
        &json!({"annotations": p.annotations, "gaps": p.gaps}),
    )?;
    Ok(format!(
        "{} of {} frames annotated, {} gaps",
        p.annotations.len(),
        frames.len(),
        p.gaps.len()
    ))
}

fn export(format: ExportFormat, input: &Path, out: &Path, images: bool) -> anyhow::Result<Vec<String>> {
    if input.is_dir() {
        if !input.join(EVENT_LOG).exists() {
            bail!("{} is not a session directory (no {EVENT_LOG})", input.display());
        }
        let session = load_session(input)?;
        let frames = images.then(|| input.join(FRAMES_DIR));
        let files = session_export_files(&session, format, frames.as_deref())?;
        for (rel, bytes) in &files {
            let path = out.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        return Ok(files.into_iter().map(|(p, _)| p).collect());
    }
    if images {
        bail!("--images needs a session directory");
    }
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let ds = Dataset::from_json(&text)?;
    Ok(write_export(&ds, format, out)?)
}

fn serve(port: u16, host: String, data_dir: PathBuf, bundle: Option<PathBuf>) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let bundle = match bundle {
        Some(p) => {
            let b: CalibrationBundle<f64> = read_json(&p)?;
            b.validate()?;
            Some(b)
        }
        None => None,
    };
    let state = insitu_service::AppState::open(&data_dir, bundle)?;
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        insitu_service::serve(listener, state).await?;
        Ok(())
    })
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Calibrate(c) => calibrate(c)?,
        Command::Annotate(AnnotateCommand::Replay {
            stream,
            kind,
            label,
            bundle,
            tip,
            epsilon,
            out,
        }) => {
            let a = replay(&stream, kind, label, bundle.as_deref(), tip, epsilon)?;
            match out {
                Some(p) => {
                    write_json(&p, &a)?;
                    println!(
                        "{} with {} points on frame {}",
                        p.display(),
                        a.points.len(),
                        a.frame_index
                    );
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&a)?)?;
                }
            }
        }
        Command::Propagate { seq, annotation, out } => println!("{}", propagate(&seq, &annotation, &out)?),
        Command::Export {
            format,
            input,
            out,
            images,
        } => {
            for f in export(format, &input, &out, images)? {
                println!("{}", out.join(f).display());
            }
        }
        Command::Serve {
            port,
            host,
            data_dir,
            bundle,
        } => serve(port, host, data_dir, bundle)?,
        Command::Sim {
            scenario,
            seed,
            command,
        } => {
            let scenario: Scenario = match scenario {
                Some(p) => read_json(&p)?,
                None => Scenario::default(),
            };
            println!("{}", sim::run(command, &scenario, seed)?);
        }
    }
    Ok(())
}
