#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenelift_core::{CameraModel, DepthImage};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenelift"))
}

/// Runs the binary with `--output-dir out` followed by `args`.
pub fn run(out: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--output-dir")
        .arg(out)
        .arg("--log-level")
        .arg("warn")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read_json(path: impl AsRef<Path>) -> serde_json::Value {
    let path = path.as_ref();
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// Depth of an infinite floor seen by a camera `height` metres above it,
/// pitched down by `pitch_deg`. Pixels whose rays miss the floor are invalid.
pub fn floor_depth(camera: &CameraModel, height: f64, pitch_deg: f64) -> DepthImage {
    let (s, c) = pitch_deg.to_radians().sin_cos();
    let mut depths = Vec::with_capacity(camera.width() * camera.height());
    for v in 0..camera.height() {
        for _ in 0..camera.width() {
            // Camera-frame ray with unit z; world up in camera coordinates is
            // (0, -cos, -sin) for a camera pitched down about its x axis.
            let y = (v as f64 - camera.cy()) / camera.fy();
            let up = -c * y - s;
            depths.push(if up < -1e-6 { height / -up } else { 0.0 });
        }
    }
    DepthImage::from_depths(camera.width(), camera.height(), depths).unwrap()
}

/// Camera-frame floor normal for `floor_depth`.
pub fn floor_normal(pitch_deg: f64) -> [f64; 3] {
    let (s, c) = pitch_deg.to_radians().sin_cos();
    [0.0, -c, -s]
}

pub fn list_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
