//! Fixture generators backed by the simulated rig, producing the files the
//! other subcommands consume.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Subcommand;
use nalgebra::Vector3;
use serde_json::json;

use insitu_core::calib::{touches_for, CircleGridSpec};
use insitu_core::geom::{Frame, RigidTransform};
use insitu_core::raster::write_sequence;
use insitu_core::sim::{
    generate_pivot_samples, generate_pointer_stream, planar_views, projector_calibration_views,
    table_grid_correspondences, Checkerboard, Illumination, LitTarget, MapSource, MotionStep, PointerModel, Renderer,
    RigConfig, Roi, Scenario, Scene, TablePath,
};

use crate::capture_dir::{write_captures, CaptureScene, CaptureView, SCENE_FILE};
use crate::write_json;

#[derive(Subcommand)]
pub enum SimCommand {
    /// Write a scenario JSON to edit and pass back with `--scenario`.
    Scenario {
        #[arg(long)]
        out: PathBuf,
        /// Camera binned 4×4 (612×512).
        #[arg(long)]
        quarter: bool,
    },
    /// Write the rig's true calibration bundle.
    Bundle {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pivot-calibration samples as CSV.
    Pivot {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Divot position, world mm.
        #[arg(long, value_delimiter = ',', default_values_t = [40.0, 10.0, 0.0])]
        pivot: Vec<f64>,
    },
    /// Checkerboard views for `calibrate intrinsics`.
    PlanarViews {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Corner noise σ, px.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Table-grid 3D–2D correspondences for `calibrate extrinsics`.
    Grid {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        rows: u32,
        #[arg(long, default_value_t = 9)]
        cols: u32,
        #[arg(long, default_value_t = 50.0)]
        spacing: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Circle-grid touches in a tracker frame offset from the world.
    Touches {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pointer stream (JSON lines, pen down) tracing a table path.
    Stream {
        #[arg(long)]
        out: PathBuf,
        /// Path as JSON, e.g. `{"kind":"circle","center":[0,0],"radius":30}`;
        /// defaults to a 80 × 60 mm rectangle.
        #[arg(long)]
        path: Option<String>,
        #[arg(long, default_value_t = 100.0)]
        speed: f64,
    },
    /// Rendered camera frames of the moving part as `frame_%06d.pgm`.
    Sequence {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        /// Per-frame motion `dx_mm,dy_mm,dtheta_deg`; replaces the
        /// scenario's motion script.
        #[arg(long, value_delimiter = ',')]
        step: Option<Vec<f64>>,
    },
    /// Gray-code captures of board placements for `calibrate projector`.
    ProjectorCaptures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        views: usize,
    },
}

pub fn run(cmd: SimCommand, scenario: &Scenario, seed: u64) -> anyhow::Result<String> {
    let rig = scenario.rig.clone().with_seed(seed);
    match cmd {
        SimCommand::Scenario { out, quarter } => {
            let mut s = scenario.clone();
            if quarter {
                s.rig = RigConfig::quarter_resolution();
            }
            s.rig.seed = seed;
            write_json(&out, &s)?;
            Ok(format!("wrote {}", out.display()))
        }
        SimCommand::Bundle { out } => {
            write_json(&out, &rig.bundle())?;
            Ok(format!("wrote {}", out.display()))
        }
        SimCommand::Pivot { out, count, pivot } => {
            let pivot = Vector3::from(crate::triple("pivot", &pivot)?);
            let s = generate_pivot_samples(&rig, &pivot, &PointerModel::default(), count);
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            crate::pivot_csv::write_samples(file, &s.samples)?;
            Ok(format!("wrote {count} samples to {}", out.display()))
        }
        SimCommand::PlanarViews { out, count, noise } => {
            let board = Checkerboard {
                square_mm: 30.0,
                ..Checkerboard::default()
            };
            let (views, _) = planar_views(&rig.camera, &board, count, noise, seed)?;
            let doc = json!({"width": rig.camera.width, "height": rig.camera.height, "views": views});
            write_json(&out, &doc)?;
            Ok(format!("wrote {count} views to {}", out.display()))
        }
        SimCommand::Grid {
            out,
            rows,
            cols,
            spacing,
            noise,
        } => {
            let c = table_grid_correspondences(&rig, rows, cols, spacing, noise, seed)?;
            write_json(&out, &c)?;
            Ok(format!("wrote {} correspondences to {}", c.len(), out.display()))
        }
        SimCommand::Touches { out } => {
            let grid = CircleGridSpec::new(4, 11, 20.0)?;
            let tracker_from_world = RigidTransform::from_axis_angle(
                Frame::World,
                Frame::Tracker,
                Vector3::new(0.1, -0.2, 0.3),
                Vector3::new(-300.0, 150.0, 1800.0),
            );
            let touches = touches_for(&grid, &tracker_from_world);
            write_json(&out, &json!({"grid": grid, "touches": touches}))?;
            Ok(format!("wrote {} touches to {}", touches.len(), out.display()))
        }
        SimCommand::Stream { out, path, speed } => {
            let path: TablePath = match path {
                Some(p) => serde_json::from_str(&p).context("parsing --path")?,
                None => TablePath::rectangle([-40.0, -30.0], [40.0, 30.0]),
            };
            let s = generate_pointer_stream(&rig, &path, speed, &PointerModel::default())?;
            let mut text = String::new();
            for sample in &s.samples {
                let mut v = serde_json::to_value(sample)?;
                v["pen_down"] = json!(true);
                text.push_str(&serde_json::to_string(&v)?);
                text.push('\n');
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            Ok(format!("wrote {} samples to {}", s.samples.len(), out.display()))
        }
        SimCommand::Sequence { out, frames, step } => {
            let mut cfg = scenario.scene.clone();
            match step {
                Some(s) => {
                    let s = crate::triple("step", &s)?;
                    let step = MotionStep {
                        dx_mm: s[0],
                        dy_mm: s[1],
                        dtheta_deg: s[2],
                    };
                    cfg = cfg.with_constant_motion(step, frames);
                }
                None => cfg.motion.truncate(frames.saturating_sub(1)),
            }
            let scene = Scene::new(cfg)?;
            let renderer = Renderer::new(&rig, scene.config.supersample)?;
            let seq: Vec<_> = (0..frames).map(|k| renderer.render(&scene, k, None)).collect();
            write_sequence(&out, &seq)?;
            Ok(format!("wrote {frames} frames to {}", out.display()))
        }
        SimCommand::ProjectorCaptures { out, views } => projector_captures(&out, scenario, seed, views),
    }
}

fn projector_captures(out: &Path, scenario: &Scenario, seed: u64, count: usize) -> anyhow::Result<String> {
    let rig = scenario.rig.clone().with_seed(seed);
    let board = Checkerboard::default();
    // Exact maps only fix the placements and crops; the images below are
    // rendered and later decoded like real captures.
    let sim = projector_calibration_views(&rig, &board, count, MapSource::Exact)?;
    let mut scene = CaptureScene {
        projector_width: rig.projector.width,
        projector_height: rig.projector.height,
        board,
        views: Vec::with_capacity(count),
    };
    for (i, v) in sim.iter().enumerate() {
        let [x0, y0] = v.view.map_origin;
        let roi = Roi {
            x0,
            y0,
            x1: x0 + v.view.map_u.width(),
            y1: y0 + v.view.map_u.height(),
        };
        let target = LitTarget {
            world_from_target: v.world_from_target,
            board: Some(board),
        };
        let light = Illumination::new(&rig, &target, Some(roi))?;
        let dir = format!("view_{i:03}");
        for seq in scene.sequences() {
            write_captures(&out.join(&dir), seq.axis, &light.graycode_captures(&seq))?;
        }
        scene.views.push(CaptureView {
            dir,
            origin: v.view.map_origin,
            camera_corners: v.view.camera_corners.iter().map(|c| [c.x, c.y]).collect(),
        });
    }
    write_json(&out.join(SCENE_FILE), &scene)?;
    Ok(format!("wrote {count} views to {}", out.display()))
}
