//! Annotation propagation over rendered sequences, checked against the
//! analytic motion of the part.

use insitu_core::annotate::{Annotation, ShapeKind};
use insitu_core::flow::{propagate_annotation, TrackParams};
use insitu_core::geom::Pixel;
use insitu_core::raster::ImageFrame;
use insitu_core::shape::polygon_iou;
use insitu_core::sim::{
    project_object_point, MotionStep, NoiseConfig, ObjectPose, Renderer, RigConfig, Scene, SceneConfig,
};

const PART_POLYGON: [[f64; 2]; 5] = [[-40.0, -30.0], [35.0, -32.0], [45.0, 10.0], [5.0, 35.0], [-38.0, 25.0]];

fn sequence(rig: &RigConfig, step: MotionStep, frames: usize) -> (Scene, Vec<ImageFrame>) {
    let cfg = SceneConfig {
        initial: ObjectPose {
            x_mm: -40.0,
            y_mm: 10.0,
            theta_rad: 0.1,
        },
        supersample: 2,
        ..SceneConfig::default()
    }
    .with_constant_motion(step, frames);
    let scene = Scene::new(cfg).unwrap();
    let renderer = Renderer::new(rig, scene.config.supersample).unwrap();
    let seq = (0..frames).map(|k| renderer.render(&scene, k, None)).collect();
    (scene, seq)
}

fn truth(rig: &RigConfig, scene: &Scene, frame: usize) -> Vec<Pixel<f64>> {
    PART_POLYGON
        .iter()
        .map(|q| project_object_point(rig, &scene.config.pose_at(frame), *q).unwrap())
        .collect()
}

#[test]
fn translating_rotating_part_is_followed() {
    let rig = RigConfig::quarter_resolution().with_noise(NoiseConfig::none());
    let mm_per_px = rig.camera_from_world.translation().z / rig.camera.fx;
    let step = MotionStep {
        dx_mm: 2.0 * mm_per_px,
        dy_mm: 0.0,
        dtheta_deg: 0.5,
    };
    let (scene, seq) = sequence(&rig, step, 30);
    let ann = Annotation::new(1, "dent", ShapeKind::Polygon, truth(&rig, &scene, 0), 0).unwrap();
    let out = propagate_annotation(&seq, &ann, &TrackParams::default()).unwrap();
    assert!(out.gaps.is_empty(), "{:?}", out.gaps);
    assert_eq!(out.annotations.len(), 30);
    for a in &out.annotations {
        let t = truth(&rig, &scene, a.frame_index as usize);
        let iou = polygon_iou(&a.points, &t);
        assert!(iou >= 0.9, "frame {} iou {iou}", a.frame_index);
    }
    let last = out.annotations.last().unwrap();
    let drift = last
        .points
        .iter()
        .zip(truth(&rig, &scene, 29))
        .map(|(p, q)| p.distance(&q))
        .fold(0.0, f64::max);
    assert!(drift <= 1.0, "drift {drift}");
}

#[test]
fn forward_backward_returns_to_start() {
    let rig = RigConfig::quarter_resolution().with_noise(NoiseConfig::none());
    let step = MotionStep {
        dx_mm: 1.5,
        dy_mm: -1.0,
        dtheta_deg: 0.3,
    };
    let (scene, mut seq) = sequence(&rig, step, 10);
    let mut back: Vec<ImageFrame> = seq.iter().rev().skip(1).cloned().collect();
    seq.append(&mut back);
    for (i, f) in seq.iter_mut().enumerate() {
        f.frame_index = i as u64;
    }
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            let q = [-50.0 + 25.0 * i as f64, -35.0 + 23.0 * j as f64];
            pts.push(project_object_point(&rig, &scene.config.pose_at(0), q).unwrap());
        }
    }
    let ann = Annotation::new(2, "dent", ShapeKind::Polyline, pts.clone(), 0).unwrap();
    let out = propagate_annotation(&seq, &ann, &TrackParams::default()).unwrap();
    let end = out.annotations.last().unwrap();
    assert_eq!(end.frame_index, 18);
    let close = end
        .points
        .iter()
        .zip(&pts)
        .filter(|(a, b)| a.distance(b) <= 0.5)
        .count();
    assert!(close as f64 >= 0.95 * pts.len() as f64, "{close}/{}", pts.len());
}

#[test]
fn constant_texture_loses_everything() {
    let rig = RigConfig::quarter_resolution().with_noise(NoiseConfig::none());
    let mut cfg = SceneConfig::default();
    cfg.texture.kind = insitu_core::sim::TextureKind::Constant { value: 90 };
    let scene = Scene::new(cfg).unwrap();
    let r = Renderer::new(&rig, 1).unwrap();
    let f = r.render(&scene, 0, None);
    assert!(f.pixels().iter().all(|v| *v == 90 || *v == 60));
    let seq = vec![f.clone(), f.with_index(1)];
    let ann = Annotation::bbox_from_corners(3, "dent", Pixel::new(290.0, 240.0), Pixel::new(320.0, 270.0), 0).unwrap();
    let out = propagate_annotation(&seq, &ann, &TrackParams::default()).unwrap();
    assert_eq!(out.gaps, vec![1]);
}
