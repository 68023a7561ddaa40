//! Dense metric depth images and lifting them into point clouds.

use nalgebra::Vector3;

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Row-major grid of metric depths with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depths: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthImage {
    /// Builds an image from raw depths; a pixel is valid iff its depth is
    /// finite and strictly positive.
    pub fn from_depths(width: usize, height: usize, depths: Vec<f64>) -> Result<Self> {
        let valid = depths.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self::from_parts(width, height, depths, valid)
    }

    pub fn from_parts(width: usize, height: usize, depths: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
        if depths.len() != n || valid.len() != n {
            return Err(Error::invalid(format!(
                "depth image {width}x{height} needs {n} samples, got {} depths and {} mask entries",
                depths.len(),
                valid.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| valid[i] && !(depths[i].is_finite() && depths[i] > 0.0)) {
            return Err(Error::invalid(format!(
                "pixel {i} is marked valid but has depth {}",
                depths[i]
            )));
        }
        Ok(Self {
            width,
            height,
            depths,
            valid,
        })
    }

    /// All-invalid image.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depths: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at `(u, v)` when the pixel is valid.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.depths[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub(crate) fn check_matches(&self, camera: &CameraModel) -> Result<()> {
        if self.width != camera.width() || self.height != camera.height() {
            return Err(Error::invalid(format!(
                "depth image is {}x{} but camera expects {}x{}",
                self.width,
                self.height,
                camera.width(),
                camera.height()
            )));
        }
        Ok(())
    }
}

/// Lifts every valid pixel into a world-frame point, in row-major scan order,
/// recording each point's source pixel.
pub fn lift_depth(depth: &DepthImage, camera: &CameraModel) -> Result<PointCloud> {
    depth.check_matches(camera)?;
    let n = depth.valid_count();
    let mut points = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for v in 0..depth.height {
        for u in 0..depth.width {
            if let Some(d) = depth.get(u, v) {
                let p: Vector3<f64> = camera.unproject(u as f64, v as f64, d);
                points.push(camera.camera_to_world(&p));
                provenance.push([u as u32, v as u32]);
            }
        }
    }
    PointCloud::with_provenance(points, Some(provenance))
}
