//! Pinhole camera model with rigid camera-to-world extrinsics.

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::check_rotation;

/// Which image extent a field-of-view angle spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FovAxis {
    #[default]
    Horizontal,
    Vertical,
    Diagonal,
}

/// Pinhole intrinsics plus the camera-to-world pose.
///
/// A camera-frame point `p` maps to world as `rotation * p + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Result of projecting a world point into the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Sub-pixel image coordinates and camera-frame depth.
    InFront { u: f64, v: f64, z: f64 },
    BehindCamera,
}

impl Projection {
    pub fn in_front(self) -> Option<(f64, f64, f64)> {
        match self {
            Projection::InFront { u, v, z } => Some((u, v, z)),
            Projection::BehindCamera => None,
        }
    }
}

impl CameraModel {
    /// Intrinsics-only camera with identity extrinsics.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera dimensions must be non-zero"));
        }
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        })
    }

    /// Square-pixel camera whose field of view along `axis` equals `fov_deg`,
    /// with the principal point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_deg: f64, axis: FovAxis) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid(format!(
                "field of view must lie in (0, 180) degrees, got {fov_deg}"
            )));
        }
        let (w, h) = (width as f64, height as f64);
        let extent = match axis {
            FovAxis::Horizontal => w,
            FovAxis::Vertical => h,
            FovAxis::Diagonal => w.hypot(h),
        };
        let f = (extent / 2.0) / (fov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, w / 2.0, h / 2.0, width, height)
    }

    /// Replaces the extrinsics. `rotation` must be a proper rotation within 1e-9.
    pub fn with_extrinsics(mut self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, 1e-9)?;
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        self.rotation = rotation;
        self.translation = translation;
        Ok(self)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The 3x3 intrinsic matrix K.
    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Horizontal field of view in degrees re-derived from `fx`.
    pub fn horizontal_fov_deg(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan().to_degrees()
    }

    /// Camera-frame point at pixel `(u, v)` with depth `d`.
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d)
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Projects a world point. Points with camera-frame `z <= 0` are behind the camera.
    pub fn project_point(&self, p: &Vector3<f64>) -> Projection {
        let c = self.world_to_camera(p);
        if !(c.z > 0.0) {
            return Projection::BehindCamera;
        }
        Projection::InFront {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            z: c.z,
        }
    }

    /// Integer pixel whose center is nearest to `(u, v)`, if inside the image.
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let pu = (u + 0.5).floor();
        let pv = (v + 0.5).floor();
        if pu < 0.0 || pv < 0.0 || pu >= self.width as f64 || pv >= self.height as f64 {
            return None;
        }
        Some((pu as usize, pv as usize))
    }

    pub fn principal_point(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }
}

/// Convenience wrapper matching the free-function form used by the pipeline:
/// horizontal field of view, identity extrinsics.
pub fn intrinsics_from_fov(width: usize, height: usize, fov_deg: f64) -> Result<CameraModel> {
    CameraModel::from_fov(width, height, fov_deg, FovAxis::Horizontal)
}

/// On-disk camera description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    #[serde(default = "identity_rows")]
    rotation: [f64; 9],
    #[serde(default)]
    translation: [f64; 3],
}

fn identity_rows() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

impl TryFrom<CameraJson> for CameraModel {
    type Error = Error;

    fn try_from(j: CameraJson) -> Result<Self> {
        let rotation = Matrix3::from_row_slice(&j.rotation);
        CameraModel::new(j.fx, j.fy, j.cx, j.cy, j.width, j.height)?
            .with_extrinsics(rotation, Vector3::from(j.translation))
    }
}

impl From<CameraModel> for CameraJson {
    fn from(c: CameraModel) -> Self {
        let r = &c.rotation;
        CameraJson {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [c.translation.x, c.translation.y, c.translation.z],
        }
    }
}
