//! Gravity alignment: the Rodrigues rotation taking the dominant horizontal
//! surface normal onto the world up axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::depth::DepthImage;
use crate::error::{Error, Result};
use crate::normals::{cluster_normals, estimate_normals, NormalConsensus, NormalMap, NormalPrefilter};

/// World gravity-opposed axis.
pub const Z_AXIS: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Proper rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        check_rotation(&m, 1e-9)?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl TryFrom<[f64; 9]> for RotationMatrix {
    type Error = Error;
    fn try_from(rows: [f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&rows))
    }
}

impl From<RotationMatrix> for [f64; 9] {
    fn from(r: RotationMatrix) -> Self {
        r.row_major()
    }
}

/// Fails unless `m` is orthonormal with determinant +1, both within `tol`.
pub fn check_rotation(m: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !m.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("rotation has non-finite entries"));
    }
    let err = (m.transpose() * m - Matrix3::identity()).amax();
    if err > tol {
        return Err(Error::invalid(format!("rotation is not orthonormal (max |RᵀR - I| = {err:e})")));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::invalid(format!("rotation determinant is {det}, expected +1")));
    }
    Ok(())
}

/// Skew-symmetric cross-product matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation taking unit vector `from` onto unit vector `to`:
/// `R = I + K + K² (1 - from·to) / |v|²` with `v = from × to` and `K = [v]×`.
///
/// Aligned inputs give the identity; antiparallel inputs are rejected since
/// the rotation axis is then undefined.
pub fn rodrigues_alignment(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<RotationMatrix> {
    for (name, x) in [("source", from), ("target", to)] {
        if !x.iter().all(|c| c.is_finite()) || (x.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("{name} vector must be unit length, got norm {}", x.norm())));
        }
    }
    let from = from.normalize();
    let to = to.normalize();
    let v = from.cross(&to);
    let c = from.dot(&to);
    let v2 = v.norm_squared();
    if v2.sqrt() < 1e-9 {
        if c > 0.0 {
            return Ok(RotationMatrix::identity());
        }
        return Err(Error::DegenerateRotation(
            "source and target are antiparallel; rotation axis undefined".into(),
        ));
    }
    let k = skew(&v);
    let r = Matrix3::identity() + k + k * k * ((1.0 - c) / v2);
    Ok(RotationMatrix(r))
}

/// Knobs for [`correct_orientation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationParams {
    pub bin_deg: f64,
    /// Consensus with a smaller inlier fraction is flagged as low confidence.
    pub inlier_warn_threshold: f64,
    pub prefilter: Option<NormalPrefilter>,
}

impl Default for OrientationParams {
    fn default() -> Self {
        Self {
            bin_deg: 10.0,
            inlier_warn_threshold: 0.2,
            prefilter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationCorrection {
    pub cloud: PointCloud,
    pub rotation: RotationMatrix,
    pub consensus: NormalConsensus,
    pub low_confidence: bool,
}

impl OrientationCorrection {
    /// `camera` with the correction folded into its extrinsics, so it views
    /// the corrected cloud exactly as the original camera viewed the input.
    pub fn corrected_camera(&self, camera: &CameraModel) -> Result<CameraModel> {
        let r = self.rotation.matrix();
        camera
            .clone()
            .with_extrinsics(r * camera.rotation(), r * camera.translation())
    }
}

/// Rotates `cloud` so the dominant horizontal surface normal of `depth`
/// becomes world +Z.
///
/// `cloud` must be `lift_depth(depth, camera)` (or any cloud in the same
/// frame); normals are estimated in the camera frame and carried into the
/// cloud frame with the camera rotation.
pub fn correct_orientation(
    cloud: &PointCloud,
    depth: &DepthImage,
    camera: &CameraModel,
    params: &OrientationParams,
) -> Result<OrientationCorrection> {
    let normals = estimate_normals(depth, camera)?;
    correct_orientation_with_normals(cloud, &normals, camera, params)
}

/// Same as [`correct_orientation`] with a precomputed (or externally
/// supplied) camera-frame normal map.
pub fn correct_orientation_with_normals(
    cloud: &PointCloud,
    normals: &NormalMap,
    camera: &CameraModel,
    params: &OrientationParams,
) -> Result<OrientationCorrection> {
    if !(0.0..=1.0).contains(&params.inlier_warn_threshold) {
        return Err(Error::invalid("inlier warning threshold must lie in [0, 1]"));
    }
    let consensus = cluster_normals(normals, params.bin_deg, params.prefilter.as_ref())?;
    let n_cloud = (camera.rotation() * consensus.normal()).normalize();
    let rotation = rodrigues_alignment(&n_cloud, &Z_AXIS)?;
    let cloud = cloud.transform(rotation.matrix(), &Vector3::zeros())?;
    let low_confidence = consensus.inlier_fraction < params.inlier_warn_threshold;
    if low_confidence {
        tracing::warn!(
            inlier_fraction = consensus.inlier_fraction,
            threshold = params.inlier_warn_threshold,
            "low-confidence normal consensus"
        );
    }
    Ok(OrientationCorrection {
        cloud,
        rotation,
        consensus,
        low_confidence,
    })
}
