mod common;

use std::path::Path;

use common::*;
use scenelift_core::annotate::Box2D;
use scenelift_core::io;
use scenelift_core::{Box3D, CameraModel, DepthImage, FovAxis};
use nalgebra::{Matrix3, Vector3};

fn write(path: &Path, bytes: &[u8]) {
    std::fs::write(path, bytes).unwrap();
}

fn checker_depth() -> DepthImage {
    // 8x6 plane at 2 m with two invalid pixels.
    let mut d = vec![2.0; 48];
    d[5] = 0.0;
    d[40] = 0.0;
    DepthImage::from_depths(8, 6, d).unwrap()
}

#[test]
fn lift_png_writes_one_point_per_valid_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("plane.png");
    write(&depth, &io::encode_depth_png(&checker_depth()).unwrap());
    let out = dir.path().join("out");
    let o = run(&out, &["lift", p(&depth)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cloud = io::read_ply(&out.join("plane.ply")).unwrap();
    assert_eq!(cloud.len(), 46);
    assert_eq!(cloud.provenance().unwrap().len(), 46);
    let m = read_json(out.join("plane.lift-manifest.json"));
    assert_eq!(m["records"][0]["lift"]["points"], 46);
    assert_eq!(m["command"], "lift");
    let cam: CameraModel = io::read_json(&out.join("plane.camera.json")).unwrap();
    assert_eq!((cam.width(), cam.height()), (8, 6));
}

#[test]
fn truncated_png_is_a_format_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = io::encode_depth_png(&checker_depth()).unwrap();
    let depth = dir.path().join("bad.png");
    write(&depth, &bytes[..bytes.len() / 2]);
    let out = dir.path().join("out");
    let o = run(&out, &["lift", p(&depth)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
    assert!(!out.exists() || list_files(&out).is_empty());
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("out"), &["lift", p(&dir.path().join("nope.pfm"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gravity_align_maps_floor_normal_to_up() {
    let dir = tempfile::tempdir().unwrap();
    let camera = CameraModel::from_fov(96, 72, 55.0, FovAxis::Horizontal).unwrap();
    let depth = floor_depth(&camera, 1.5, 25.0);
    let path = dir.path().join("floor.pfm");
    write(&path, &io::encode_pfm(&io::PfmImage::from_depth(&depth)));
    let out = dir.path().join("out");
    let o = run(&out, &["lift", p(&path), "--gravity-align"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(out.join("floor.lift-manifest.json"));
    let r: Vec<f64> = serde_json::from_value(m["records"][0]["lift"]["rotation"].clone()).unwrap();
    let r = Matrix3::from_row_slice(&r);
    let n = Vector3::from(floor_normal(25.0));
    // Depth went through f32 storage, so normals carry ~1e-7 relative noise.
    assert!((r * n - Vector3::z()).norm() < 1e-4, "{}", r * n);
    // Every lifted floor point now sits 1.5 m below the camera.
    let cloud = io::read_ply(&out.join("floor.ply")).unwrap();
    assert!(cloud.points().iter().all(|q| (q.z + 1.5).abs() < 1e-3));
}

#[test]
fn bad_config_aborts_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("plane.png");
    write(&depth, &io::encode_depth_png(&checker_depth()).unwrap());
    let cfg = dir.path().join("bad.toml");
    write(&cfg, b"[dbscan]\nepsilon = 1\n");
    let out = dir.path().join("out");
    let o = run(&out, &["--config", p(&cfg), "lift", p(&depth)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("config error"));
    write(&cfg, b"fov_deg = 200\n");
    assert_eq!(code(&run(&out, &["--config", p(&cfg), "lift", p(&depth)])), 1);
    assert!(!out.exists());
    assert_eq!(code(&run(&out, &["lift"])), 1);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("plane.png");
    write(&depth, &io::encode_depth_png(&checker_depth()).unwrap());
    let cfg = dir.path().join("c.toml");
    write(&cfg, b"fov_deg = 70\n");
    let out = dir.path().join("out");
    assert_eq!(code(&run(&out, &["--config", p(&cfg), "lift", p(&depth)])), 0);
    let from_file = read_json(out.join("plane.lift-manifest.json"));
    assert_eq!(from_file["config"]["fov_deg"], 70.0);
    assert_eq!(code(&run(&out, &["--config", p(&cfg), "lift", p(&depth), "--fov-deg", "40"])), 0);
    let from_flag = read_json(out.join("plane.lift-manifest.json"));
    assert_eq!(from_flag["config"]["fov_deg"], 40.0);
    assert_ne!(from_file["config_hash"], from_flag["config_hash"]);
}

/// A lifted two-object scene with provenance, plus matching detections.
fn annotate_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let generator = scenelift_core::synth::RoomGenerator {
        width: 160,
        height: 120,
        min_visible_px: 60,
        ..Default::default()
    };
    let scene = generator.generate(5).unwrap();
    let cloud = scenelift_core::depth::lift_depth(&scene.depth, &scene.camera).unwrap();
    let fixed = scenelift_core::rotation::correct_orientation(
        &cloud,
        &scene.depth,
        &scene.camera,
        &Default::default(),
    )
    .unwrap();
    let ply = dir.join("scene.ply");
    write(&ply, &io::encode_ply(&fixed.cloud));
    let dets = dir.join("dets.json");
    write(&dets, &io::to_json_bytes(&scene.boxes2d));
    (ply, dets)
}

fn template_priors(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("priors.json");
    write(&path, scenelift_core::synth::template_priors().to_json().as_bytes());
    path
}

#[test]
fn annotate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (ply, dets) = annotate_fixture(dir.path());
    let priors = template_priors(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(out, &["annotate", p(&ply), p(&dets), "--priors", p(&priors)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["scene.boxes3d.json", "scene.drops.json", "scene.annotate-manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let boxes: Vec<Box3D> = io::read_json(&a.join("scene.boxes3d.json")).unwrap();
    assert!(!boxes.is_empty());
}

#[test]
fn unknown_category_rejected_by_policy() {
    let dir = tempfile::tempdir().unwrap();
    let (ply, dets) = annotate_fixture(dir.path());
    let mut boxes: Vec<Box2D> = io::read_json(&dets).unwrap();
    boxes[0].category = "spaceship".into();
    write(&dets, &io::to_json_bytes(&boxes));
    let priors = template_priors(dir.path());
    let out = dir.path().join("out");
    let o = run(
        &out,
        &["annotate", p(&ply), p(&dets), "--priors", p(&priors), "--unknown-category-policy", "reject"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let drops = read_json(out.join("scene.drops.json"));
    assert_eq!(drops[0]["index"], 0);
    assert_eq!(drops[0]["reason"], "unknown-category");

    // Default policy keeps it.
    let o = run(&out, &["annotate", p(&ply), p(&dets), "--priors", p(&priors)]);
    assert_eq!(code(&o), 0);
    let m = read_json(out.join("scene.annotate-manifest.json"));
    assert_eq!(m["records"][0]["annotate"]["kept"][0]["unknown_category"], true);
}

#[test]
fn empty_detections_give_empty_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let (ply, dets) = annotate_fixture(dir.path());
    write(&dets, b"[]");
    let priors = template_priors(dir.path());
    let out = dir.path().join("out");
    let o = run(&out, &["annotate", p(&ply), p(&dets), "--priors", p(&priors)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(out.join("scene.boxes3d.json")), serde_json::json!([]));
    assert_eq!(read_json(out.join("scene.drops.json")), serde_json::json!([]));
}

#[test]
fn render_modes_emit_expected_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (ply, _) = annotate_fixture(dir.path());
    let camera = dir.path().join("cam.json");
    write(
        &camera,
        &io::to_json_bytes(&CameraModel::from_fov(64, 48, 55.0, FovAxis::Horizontal).unwrap()),
    );
    let out = dir.path().join("out");
    for (mode, images) in [("sweep", 121), ("partial", 120), ("compact", 1), ("single", 1)] {
        let o = run(&out, &["render", p(&ply), "--mode", mode, "--camera", p(&camera)]);
        assert_eq!(code(&o), 0, "{mode}: {}", stderr(&o));
        let side = read_json(out.join(format!("scene.{mode}.json")));
        match mode {
            "sweep" | "partial" => {
                let entries = side["entries"].as_array().unwrap();
                assert_eq!(entries.len(), images);
                for e in entries {
                    assert!(out.join(e["file"].as_str().unwrap()).exists());
                }
            }
            "compact" => assert_eq!(side["candidates"].as_array().unwrap().len(), 121),
            _ => assert!(side["compactness"].is_number()),
        }
    }
    assert_eq!(list_files(&out.join("scene.sweep")).len(), 121);
    assert_eq!(list_files(&out.join("scene.partial")).len(), 120);
}

#[test]
fn render_empty_cloud_gives_all_zero_png() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("empty.ply");
    write(&ply, &io::encode_ply(&scenelift_core::PointCloud::empty()));
    let out = dir.path().join("out");
    let o = run(&out, &["render", p(&ply), "--width", "16", "--height", "12"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let img = io::read_depth(&out.join("empty.png")).unwrap();
    assert_eq!((img.width(), img.height()), (16, 12));
    assert_eq!(img.valid_count(), 0);
}

fn cube(x: f64, cat: &str, score: f64) -> serde_json::Value {
    serde_json::json!({"center": [x, 0.0, 0.5], "dims": [1.0, 1.0, 1.0], "yaw": 0.0, "category": cat, "score": score})
}

#[test]
fn evaluate_reference_cases() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    write(
        &gt,
        serde_json::to_string(&serde_json::json!([
            {"scene": "s0", "boxes": [cube(0.0, "chair", 1.0), cube(5.0, "table", 1.0)]}
        ]))
        .unwrap()
        .as_bytes(),
    );
    let eval = |dets: serde_json::Value, name: &str| {
        let path = dir.path().join(format!("{name}.json"));
        write(&path, dets.to_string().as_bytes());
        let out = dir.path().join(name);
        let o = run(&out, &["evaluate", p(&path), p(&gt)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_json(out.join("report.json"))
    };

    let perfect = eval(
        serde_json::json!([{"scene": "s0", "boxes": [cube(0.0, "chair", 0.9), cube(5.0, "table", 0.8)]}]),
        "perfect",
    );
    assert_eq!(perfect["mean_ap"], 1.0);
    assert_eq!(perfect["interpolation"], "all-points");
    assert_eq!(perfect["iou_thresh"], 0.25);

    let empty = eval(serde_json::json!([]), "empty");
    assert_eq!(empty["mean_ap"], 0.0);
    for c in empty["per_class"].as_array().unwrap() {
        assert_eq!(c["ap"], 0.0);
    }

    // Chair: a confident false positive, then the true positive -> AP 0.5.
    // Table: exact -> AP 1. Mean 0.75.
    let half = eval(
        serde_json::json!([{"scene": "s0", "boxes": [
            cube(20.0, "chair", 0.9), cube(0.0, "chair", 0.5), cube(5.0, "table", 0.7)
        ]}]),
        "half",
    );
    assert_eq!(half["per_class"][0]["category"], "chair");
    assert_eq!(half["per_class"][0]["ap"], 0.5);
    assert_eq!(half["mean_ap"], 0.75);
    let csv = std::fs::read_to_string(dir.path().join("half/report.csv")).unwrap();
    assert!(csv.contains("chair,0.5\n"), "{csv}");
}

#[test]
fn priors_check_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = template_priors(dir.path());
    let o = bin().args(["priors-check", p(&good)]).output().unwrap();
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["categories"], 8);
    let bad = dir.path().join("bad.json");
    write(&bad, b"{\"bed\": [1, 2]}");
    let o = bin().args(["priors-check", p(&bad)]).output().unwrap();
    assert_eq!(code(&o), 2);
}

fn small_corpus(dir: &Path, rooms: usize) -> scenelift_cli::fixtures::Corpus {
    let generator = scenelift_core::synth::RoomGenerator {
        width: 96,
        height: 72,
        min_visible_px: 40,
        min_objects: 3,
        max_objects: 3,
        ..Default::default()
    };
    scenelift_cli::fixtures::write_synthetic_corpus(dir, rooms, 100, &generator).unwrap()
}

#[test]
fn pipeline_records_partial_failures() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 3);
    // Corrupt the second depth file.
    let bad = dir.path().join("room001.pfm");
    let bytes = std::fs::read(&bad).unwrap();
    write(&bad, &bytes[..bytes.len() / 3]);
    let out = dir.path().join("out");
    let o = run(
        &out,
        &["pipeline", p(&corpus.manifest), "--priors", p(&corpus.priors), "--modes", "single"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let m = read_json(out.join("manifest.json"));
    let records = m["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    let status: Vec<&str> = records.iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert_eq!(status, ["ok", "failed", "ok"]);
    assert!(records[1]["error"].as_str().unwrap().contains("format error"));
    assert!(!out.join("room001").exists());
    assert!(out.join("room000/render.png").exists());
    let dets = read_json(out.join("detections.json"));
    assert_eq!(dets.as_array().unwrap().len(), 2);
    assert!(list_files(&out).iter().all(|f| !f.to_string_lossy().contains(".staging")));
}

#[test]
fn pipeline_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "2")] {
        let o = run(
            out,
            &["--jobs", jobs, "pipeline", p(&corpus.manifest), "--priors", p(&corpus.priors), "--modes", "single,compact"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = list_files(&a);
    assert_eq!(files, list_files(&b));
    for f in files.iter().filter(|f| !f.ends_with("timings.json")) {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{}", f.display());
    }
}

#[test]
fn empty_pipeline_manifest_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(&manifest, br#"{"inputs": []}"#);
    let priors = template_priors(dir.path());
    let out = dir.path().join("out");
    let o = run(&out, &["pipeline", p(&manifest), "--priors", p(&priors)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(out.join("manifest.json"))["records"], serde_json::json!([]));
}

#[test]
fn pipeline_rejects_duplicate_ids_before_processing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(
        &manifest,
        br#"{"inputs": [{"id": "a", "depth": "x.pfm", "detections": "d.json"}, {"id": "a", "depth": "y.pfm", "detections": "d.json"}]}"#,
    );
    let priors = template_priors(dir.path());
    let out = dir.path().join("out");
    assert_eq!(code(&run(&out, &["pipeline", p(&manifest), "--priors", p(&priors)])), 1);
    assert!(!out.exists());
}
