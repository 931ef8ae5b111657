//! HTTP contract of the session service, exercised in-process.

use std::io::Read;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

use insitu_core::export::{export_yolo, import_cvat_xml, yolo_line, Dataset, ExportFormat};
use insitu_core::geom::{Frame, Point3};
use insitu_core::sample::TrackedSample;
use insitu_core::sim::{generate_pointer_stream, NoiseConfig, PointerModel, RigConfig, Scenario, TablePath};
use insitu_service::archive::session_archive;
use insitu_service::store::load_session;
use insitu_service::{router, AppState, ErrorPayload, FrameView, SessionSummary};

struct Harness {
    app: Router,
    state: AppState,
    _dir: tempfile::TempDir,
}

fn scenario() -> Scenario {
    Scenario {
        rig: RigConfig::quarter_resolution().with_noise(NoiseConfig::none()),
        ..Scenario::default()
    }
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(dir.path(), None).unwrap();
    Harness {
        app: router(state.clone()),
        state,
        _dir: dir,
    }
}

impl Harness {
    async fn call(&self, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: Method, uri: &str, body: Value) -> (StatusCode, Value) {
        let (s, b) = self.call(method, uri, body.to_string()).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    async fn create(&self) -> String {
        let body = json!({"labels": ["part", "scratch"], "name": "bench", "scenario": scenario()});
        let (s, v) = self.json(Method::POST, "/sessions", body).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn cursor(&self, id: &str, points: &[(f64, f64)], t0: f64) -> (StatusCode, Value) {
        let items: Vec<Value> = points
            .iter()
            .enumerate()
            .map(|(i, (u, v))| json!({"timestamp": t0 + i as f64 * 0.1, "pixel": [u, v], "pen_down": true}))
            .collect();
        self.json(Method::POST, &format!("/sessions/{id}/samples"), Value::Array(items))
            .await
    }

    async fn wait_capture(&self, id: &str) -> Value {
        for _ in 0..600 {
            let (_, v) = self
                .json(Method::GET, &format!("/sessions/{id}/capture/status"), Value::Null)
                .await;
            if v["phase"] != "running" {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        panic!("capture did not finish");
    }
}

fn error_code(body: &Value) -> String {
    serde_json::from_value::<ErrorPayload>(body.clone()).unwrap().code
}

fn untar(bytes: &[u8]) -> Vec<(String, Vec<u8>)> {
    let mut ar = tar::Archive::new(bytes);
    ar.entries()
        .unwrap()
        .map(|e| {
            let mut e = e.unwrap();
            let path = e.path().unwrap().to_string_lossy().into_owned();
            let mut buf = Vec::new();
            e.read_to_end(&mut buf).unwrap();
            (path, buf)
        })
        .collect()
}

#[tokio::test]
async fn create_validates_body() {
    let h = harness();
    let (s, v) = h.json(Method::POST, "/sessions", json!({"labels": []})).await;
    assert_eq!(
        (s, error_code(&v).as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, "malformed_body")
    );
    let (s, _) = h.json(Method::POST, "/sessions", json!({"labels": ["a", "a"]})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h.call(Method::POST, "/sessions", "not json").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h
        .json(Method::POST, "/sessions", json!({"labels": ["a"], "colour": 3}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let id = h.create().await;
    let (s, v) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    let summary: SessionSummary = serde_json::from_value(v).unwrap();
    assert_eq!(summary.labels, ["part", "scratch"]);
    assert_eq!(summary.trajectory_length, 0);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let h = harness();
    for (m, uri) in [
        (Method::GET, "/sessions/s999999"),
        (Method::POST, "/sessions/nope/samples"),
        (Method::GET, "/sessions/nope/export?format=yolo"),
        (Method::GET, "/sessions/nope/capture/status"),
    ] {
        let (s, v) = h.json(m, uri, json!([])).await;
        assert_eq!(s, StatusCode::NOT_FOUND);
        assert_eq!(error_code(&v), "session_not_found");
    }
}

#[tokio::test]
async fn two_point_box_exports_one_yolo_line() {
    let h = harness();
    let id = h.create().await;
    let (s, v) = h.cursor(&id, &[(200.0, 150.0), (380.0, 330.0)], 0.0).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["accepted"], 2);
    assert!(v["overlay"]["u"].is_number());

    let (s, a) = h
        .json(
            Method::POST,
            &format!("/sessions/{id}/annotations"),
            json!({"kind": "bbox", "label": "part"}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED, "{a}");
    // Cursor pixels go through the table and back, so the box corners are
    // the clicked pixels.
    let p = &a["points"];
    for (got, want) in [
        (&p[0]["u"], 200.0),
        (&p[0]["v"], 150.0),
        (&p[1]["u"], 380.0),
        (&p[1]["v"], 330.0),
    ] {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-6);
    }

    let (s, bytes) = h
        .call(
            Method::GET,
            &format!("/sessions/{id}/export?format=yolo"),
            Body::empty(),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let files = untar(&bytes);
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["classes.txt", "labels/frame_000000.txt", "yolo_report.json"]);
    assert_eq!(files[0].1, b"part\nscratch\n");
    let expected = yolo_line(0, [200.0, 150.0], [380.0, 330.0], 612, 512);
    assert_eq!(String::from_utf8(files[1].1.clone()).unwrap(), expected);
}

#[tokio::test]
async fn sample_bodies_and_batch_atomicity() {
    let h = harness();
    let id = h.create().await;
    let uri = format!("/sessions/{id}/samples");
    let lines = "{\"timestamp\":0.0,\"pixel\":[100,100],\"pen_down\":true}\n\n{\"timestamp\":0.5,\"pixel\":[120,100],\"pen_down\":false}\n";
    let (s, b) = h.call(Method::POST, &uri, lines).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&b));

    let single = json!({"timestamp": 1.0, "pixel": [130, 100], "pen_down": true});
    assert_eq!(h.json(Method::POST, &uri, single).await.0, StatusCode::ACCEPTED);

    // Second item goes back in time: nothing from the batch is kept.
    let bad = json!([
        {"timestamp": 2.0, "pixel": [140, 100], "pen_down": true},
        {"timestamp": 1.5, "pixel": [150, 100], "pen_down": true}
    ]);
    let (s, v) = h.json(Method::POST, &uri, bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (s, v) = h.json(Method::POST, &uri, json!([{"timestamp": 3.0}])).await;
    assert_eq!(
        (s, error_code(&v).as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, "malformed_body")
    );
    let (s, _) = h.call(Method::POST, &uri, "").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, v) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(v["trajectory_length"], 3);

    assert_eq!(
        h.call(Method::DELETE, &format!("/sessions/{id}/trajectory"), Body::empty())
            .await
            .0,
        StatusCode::NO_CONTENT
    );
    let (_, v) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(v["trajectory_length"], 0);
}

#[tokio::test]
async fn tracked_samples_report_projector_overlay() {
    let h = harness();
    let id = h.create().await;
    let rig = scenario().rig;
    let pointer = PointerModel::default();
    let path = TablePath::rectangle([-30.0, -20.0], [30.0, 20.0]);
    let stream = generate_pointer_stream(&rig, &path, 200.0, &pointer).unwrap();
    let mut samples = stream.samples.clone();
    samples[3] = TrackedSample::invalid(samples[3].timestamp);
    let body: Vec<Value> = samples
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(s).unwrap();
            v["pen_down"] = json!(true);
            v
        })
        .collect();
    let (s, v) = h
        .json(Method::POST, &format!("/sessions/{id}/samples"), Value::Array(body))
        .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["rejected"], 1);
    assert_eq!(v["accepted"].as_u64().unwrap() as usize, samples.len() - 1);
    let tip = Point3::new(
        Frame::Pointer,
        pointer.tip_offset[0],
        pointer.tip_offset[1],
        pointer.tip_offset[2],
    );
    let last = samples.last().unwrap().pose(Frame::World).unwrap();
    let want = rig.bundle().tip_to_projector_pixel(&last, &tip).unwrap();
    assert!((v["overlay"]["u"].as_f64().unwrap() - want.u).abs() < 1e-9);
    assert!((v["overlay"]["v"].as_f64().unwrap() - want.v).abs() < 1e-9);

    let (s, a) = h
        .json(
            Method::POST,
            &format!("/sessions/{id}/annotations"),
            json!({"kind": "polygon", "label": "scratch"}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED, "{a}");
    assert_eq!(a["points"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn annotation_errors_map_to_payloads() {
    let h = harness();
    let id = h.create().await;
    let uri = format!("/sessions/{id}/annotations");
    let (s, v) = h
        .json(Method::POST, &uri, json!({"kind": "bbox", "label": "part"}))
        .await;
    assert_eq!((s, error_code(&v).as_str()), (StatusCode::CONFLICT, "empty_trajectory"));

    h.cursor(&id, &[(100.0, 100.0), (300.0, 100.0), (300.0, 300.0)], 0.0)
        .await;
    let (s, v) = h
        .json(Method::POST, &uri, json!({"kind": "polygon", "label": "part"}))
        .await;
    assert_eq!((s, error_code(&v).as_str()), (StatusCode::CONFLICT, "open_contour"));
    let (s, v) = h
        .json(Method::POST, &uri, json!({"kind": "bbox", "label": "rust"}))
        .await;
    assert_eq!(
        (s, error_code(&v).as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, "unknown_label")
    );
    let (s, _) = h
        .json(Method::POST, &uri, json!({"kind": "circle", "label": "part"}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h
        .json(Method::POST, &uri, json!({"kind": "polyline", "label": "part"}))
        .await;
    assert_eq!(s, StatusCode::CREATED);
}

#[tokio::test]
async fn state_machine_and_capture() {
    let h = harness();
    let id = h.create().await;
    let cap = format!("/sessions/{id}/capture");
    let (s, v) = h
        .json(Method::POST, &cap, json!({"frames": {"kind": "sim", "frames": 3}}))
        .await;
    assert_eq!((s, error_code(&v).as_str()), (StatusCode::CONFLICT, "invalid_state"));

    h.cursor(&id, &[(250.0, 215.0), (360.0, 295.0)], 0.0).await;
    h.json(
        Method::POST,
        &format!("/sessions/{id}/annotations"),
        json!({"kind": "bbox", "label": "part"}),
    )
    .await;
    let (s, _) = h
        .json(Method::POST, &cap, json!({"frames": {"kind": "sim", "frames": 0}}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let step = json!({"dx_mm": 1.0, "dy_mm": 0.5, "dtheta_deg": 0.2});
    let (s, v) = h
        .json(
            Method::POST,
            &cap,
            json!({"frames": {"kind": "sim", "frames": 4, "step": step}}),
        )
        .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");

    let (s, v) = h.cursor(&id, &[(10.0, 10.0)], 10.0).await;
    assert_eq!((s, error_code(&v).as_str()), (StatusCode::CONFLICT, "invalid_state"));

    let status = h.wait_capture(&id).await;
    assert_eq!(status["phase"], "done", "{status}");
    assert_eq!(status["frames"], 4);
    assert_eq!(status["done"], status["total"]);
    let (_, v) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(v["state"], "closed");
    let (s, _) = h
        .json(Method::POST, &cap, json!({"frames": {"kind": "sim", "frames": 2}}))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (_, bytes) = h
        .call(
            Method::GET,
            &format!("/sessions/{id}/export?format=json"),
            Body::empty(),
        )
        .await;
    let ds = Dataset::from_json(std::str::from_utf8(&untar(&bytes)[0].1).unwrap()).unwrap();
    assert_eq!(ds.frames.len(), 4);
    assert!(ds.frames.iter().all(|f| f.annotations.len() == 1));

    let (s, bytes) = h
        .call(
            Method::GET,
            &format!("/sessions/{id}/export?format=cvat&images=true"),
            Body::empty(),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let files = untar(&bytes);
    assert_eq!(files.len(), 5);
    assert!(files[1..]
        .iter()
        .all(|(p, b)| p.starts_with("images/") && b.starts_with(b"\x89PNG")));
}

#[tokio::test]
async fn empty_session_exports_valid_files() {
    let h = harness();
    let id = h.create().await;
    for format in ["yolo", "cvat", "json"] {
        let (s, bytes) = h
            .call(
                Method::GET,
                &format!("/sessions/{id}/export?format={format}"),
                Body::empty(),
            )
            .await;
        assert_eq!(s, StatusCode::OK);
        let files = untar(&bytes);
        match format {
            "yolo" => assert_eq!(files[0], ("classes.txt".to_string(), b"part\nscratch\n".to_vec())),
            "cvat" => {
                let ds = import_cvat_xml(std::str::from_utf8(&files[0].1).unwrap()).unwrap();
                assert!(ds.frames.is_empty());
            }
            _ => assert!(Dataset::from_json(std::str::from_utf8(&files[0].1).unwrap())
                .unwrap()
                .frames
                .is_empty()),
        }
    }
    let (s, v) = h
        .json(Method::GET, &format!("/sessions/{id}/export?format=xml"), Value::Null)
        .await;
    assert_eq!(
        (s, error_code(&v).as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, "malformed_body")
    );
}

#[tokio::test]
async fn latest_frame_carries_image_and_overlay() {
    let h = harness();
    let id = h.create().await;
    h.cursor(&id, &[(250.0, 200.0), (300.0, 260.0)], 0.0).await;
    let (s, v) = h
        .json(Method::GET, &format!("/sessions/{id}/frames/latest"), Value::Null)
        .await;
    assert_eq!(s, StatusCode::OK);
    let view: FrameView = serde_json::from_value(v).unwrap();
    assert_eq!((view.width, view.height, view.encoding.as_str()), (612, 512, "png"));
    use base64::Engine as _;
    let png = base64::engine::general_purpose::STANDARD.decode(&view.image).unwrap();
    let frame = insitu_core::raster::ImageFrame::from_png(&png, 0).unwrap();
    assert_eq!((frame.width(), frame.height()), (612, 512));
    assert_eq!(view.trajectory.len(), 2);
    assert!((view.trajectory[1].u - 300.0).abs() < 1e-6);
    assert!(view.overlay.is_some());
    let (s, _) = h
        .json(
            Method::GET,
            &format!("/sessions/{id}/frames/latest?encoding=jpeg"),
            Value::Null,
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_survive_restart_and_match_offline_export() {
    let h = harness();
    let id = h.create().await;
    h.cursor(&id, &[(200.0, 150.0), (330.0, 300.0)], 0.0).await;
    h.json(
        Method::POST,
        &format!("/sessions/{id}/annotations"),
        json!({"kind": "bbox", "label": "scratch"}),
    )
    .await;
    h.cursor(&id, &[(100.0, 100.0)], 5.0).await;
    let (_, before) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    let (_, http) = h
        .call(
            Method::GET,
            &format!("/sessions/{id}/export?format=cvat"),
            Body::empty(),
        )
        .await;

    let offline = load_session(&h.state.session_dir(&id)).unwrap();
    assert_eq!(session_archive(&offline, ExportFormat::Cvat, None).unwrap(), http);
    let yolo = export_yolo(&offline.dataset()).unwrap();
    assert_eq!(yolo.documents.len(), 1);

    let reopened = AppState::open(h._dir.path(), None).unwrap();
    let h2 = Harness {
        app: router(reopened.clone()),
        state: reopened,
        _dir: tempfile::tempdir().unwrap(),
    };
    let (_, after) = h2.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(before, after);
    let next = h2.create().await;
    assert_ne!(next, id);
}

#[derive(Clone, Debug)]
enum Op {
    Samples(f64, f64, bool),
    Garbage,
    Annotate(usize),
    Clear,
    Capture(usize),
    Status,
    Export(usize),
    Summary,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0.0..612.0f64, 0.0..512.0f64, any::<bool>()).prop_map(|(u, v, p)| Op::Samples(u, v, p)),
        1 => Just(Op::Garbage),
        2 => (0..4usize).prop_map(Op::Annotate),
        1 => Just(Op::Clear),
        1 => (0..3usize).prop_map(Op::Capture),
        1 => Just(Op::Status),
        1 => (0..3usize).prop_map(Op::Export),
        1 => Just(Op::Summary),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_request_sequences_keep_sessions_consistent(ops in prop::collection::vec(op(), 1..25)) {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async {
            let h = harness();
            let id = h.create().await;
            let mut t = 0.0;
            for op in ops {
                t += 0.1;
                let (s, body) = match op {
                    Op::Samples(u, v, pen) => h.json(Method::POST, &format!("/sessions/{id}/samples"),
                        json!([{"timestamp": t, "pixel": [u, v], "pen_down": pen}])).await,
                    Op::Garbage => h.json(Method::POST, &format!("/sessions/{id}/samples"), json!({"x": 1})).await,
                    Op::Annotate(k) => {
                        let kind = ["bbox", "polygon", "polyline", "blob"][k];
                        h.json(Method::POST, &format!("/sessions/{id}/annotations"), json!({"kind": kind, "label": "part"})).await
                    }
                    Op::Clear => h.json(Method::DELETE, &format!("/sessions/{id}/trajectory"), Value::Null).await,
                    Op::Capture(n) => h.json(Method::POST, &format!("/sessions/{id}/capture"),
                        json!({"frames": {"kind": "sim", "frames": n}})).await,
                    Op::Status => h.json(Method::GET, &format!("/sessions/{id}/capture/status"), Value::Null).await,
                    Op::Export(k) => {
                        let f = ["yolo", "cvat", "json"][k];
                        h.json(Method::GET, &format!("/sessions/{id}/export?format={f}"), Value::Null).await
                    }
                    Op::Summary => h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await,
                };
                prop_assert!(
                    [200u16, 201, 202, 204, 409, 422].contains(&s.as_u16()),
                    "unexpected {} {}", s, body
                );
                if s.is_client_error() {
                    prop_assert!(serde_json::from_value::<ErrorPayload>(body).is_ok());
                }
            }
            h.wait_capture(&id).await;
            // The in-memory session equals a replay of its log.
            let (_, live) = h.json(Method::GET, &format!("/sessions/{id}"), Value::Null).await;
            let replayed = load_session(&h.state.session_dir(&id)).unwrap();
            prop_assert_eq!(live, serde_json::to_value(SessionSummary::from(&replayed)).unwrap());
            let (s, _) = h.call(Method::GET, &format!("/sessions/{id}/export?format=cvat"), Body::empty()).await;
            prop_assert_eq!(s, StatusCode::OK);
            Ok(())
        })?;
    }
}
