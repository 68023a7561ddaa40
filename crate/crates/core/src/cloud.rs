//! Ordered point clouds with optional source-pixel provenance.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::rotation::check_rotation;

/// Ordered list of 3D points in meters.
///
/// When `provenance` is present it holds the `(u, v)` source pixel of each
/// point, index-aligned with `points`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    provenance: Option<Vec<[u32; 2]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        Self::with_provenance(points, None)
    }

    pub fn with_provenance(points: Vec<Vector3<f64>>, provenance: Option<Vec<[u32; 2]>>) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {bad} has a non-finite coordinate")));
        }
        if let Some(prov) = &provenance {
            if prov.len() != points.len() {
                return Err(Error::invalid(format!(
                    "provenance length {} does not match {} points",
                    prov.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, provenance })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn provenance(&self) -> Option<&[[u32; 2]]> {
        self.provenance.as_deref()
    }

    /// Mean of all points; the origin for an empty cloud.
    pub fn centroid(&self) -> Vector3<f64> {
        if self.points.is_empty() {
            return Vector3::zeros();
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        sum / self.points.len() as f64
    }

    /// Sub-cloud made of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            provenance: self
                .provenance
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
        }
    }

    /// Applies `p -> rotation * p + translation` to every point, keeping order
    /// and provenance.
    pub fn transform(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<PointCloud> {
        check_rotation(rotation, 1e-9)?;
        Ok(PointCloud {
            points: self.points.iter().map(|p| rotation * p + translation).collect(),
            provenance: self.provenance.clone(),
        })
    }
}

/// Free-function form of [`PointCloud::transform`].
pub fn transform_cloud(cloud: &PointCloud, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<PointCloud> {
    cloud.transform(rotation, translation)
}
