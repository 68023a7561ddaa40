//! File formats: depth (16-bit PNG millimetres, PFM metres), normal maps
//! (float TIFF, PFM), binary PLY point clouds and JSON records.
//!
//! Every format has a byte-level encoder/decoder pair so callers can decide
//! how bytes reach the disk.

mod pfm;
mod ply;
mod png;
mod tiff;

use std::path::Path;

use serde::de::DeserializeOwned;

pub use self::pfm::{decode_pfm, encode_pfm, PfmImage};
pub use self::ply::{decode_ply, encode_ply};
pub use self::png::{decode_depth_png, encode_depth_png};
pub use self::tiff::{decode_normals_tiff, encode_normals_tiff};

use crate::depth::DepthImage;
use crate::error::{Error, Result};
use crate::normals::NormalMap;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

/// Decodes a depth image, choosing the format from the file extension.
pub fn decode_depth(path: &Path, bytes: &[u8]) -> Result<DepthImage> {
    match extension(path).as_str() {
        "png" => decode_depth_png(bytes),
        "pfm" => decode_pfm(bytes)?.into_depth(),
        other => Err(Error::format(format!(
            "{}: unsupported depth extension `{other}` (expected .png or .pfm)",
            path.display()
        ))),
    }
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    decode_depth(path, &read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Encodes a depth image in the format implied by the extension.
pub fn encode_depth(path: &Path, depth: &DepthImage) -> Result<Vec<u8>> {
    match extension(path).as_str() {
        "png" => encode_depth_png(depth),
        "pfm" => Ok(encode_pfm(&PfmImage::from_depth(depth))),
        other => Err(Error::invalid(format!("unsupported depth extension `{other}`"))),
    }
}

/// Reads an externally supplied camera-frame normal map (.tif/.tiff or .pfm).
pub fn read_normals(path: &Path) -> Result<NormalMap> {
    let bytes = read_bytes(path)?;
    let map = match extension(path).as_str() {
        "tif" | "tiff" => decode_normals_tiff(&bytes),
        "pfm" => decode_pfm(&bytes).and_then(|p| p.into_normals()),
        other => Err(Error::format(format!("unsupported normal map extension `{other}`"))),
    };
    map.map_err(|e| with_path(e, path))
}

pub fn read_ply(path: &Path) -> Result<crate::cloud::PointCloud> {
    decode_ply(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Parses JSON, reporting syntax and schema problems as format errors.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Io => Error::format(e.to_string()),
        _ => Error::format(format!("invalid JSON: {e}")),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Normalises raw per-pixel vectors: zero or non-finite vectors become absent.
fn to_normals(width: usize, height: usize, raw: impl Iterator<Item = [f64; 3]>) -> Result<NormalMap> {
    let normals = raw
        .map(|[x, y, z]| {
            let v = nalgebra::Vector3::new(x, y, z);
            let n = v.norm();
            (n.is_finite() && n > 1e-6).then(|| v / n)
        })
        .collect();
    NormalMap::new(width, height, normals, None)
}
