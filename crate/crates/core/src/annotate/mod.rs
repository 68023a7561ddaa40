//! Pseudo 3D box annotations from 2D detections: frustum lifting, density
//! clustering, oriented box fitting and size-prior filtering.

mod boxfit;
mod dbscan;
mod filter;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boxfit::{convex_hull, fit_box, min_area_rect, MinAreaRect};
pub use dbscan::{dbscan, ClusterLabeling, NOISE};
pub use filter::{size_filter, SizeDecision, UnknownCategoryPolicy};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::priors::SizePriorDB;

/// Axis-aligned image-space detection box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Box2DJson", into = "Box2DJson")]
pub struct Box2D {
    pub umin: f64,
    pub vmin: f64,
    pub umax: f64,
    pub vmax: f64,
    pub category: String,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Box2DJson {
    bbox: [f64; 4],
    category: String,
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

impl Box2D {
    pub fn new(bbox: [f64; 4], category: impl Into<String>, score: f64) -> Result<Self> {
        let [umin, vmin, umax, vmax] = bbox;
        if !bbox.iter().all(|c| c.is_finite()) || !(umin < umax && vmin < vmax) {
            return Err(Error::invalid(format!("2D box {bbox:?} must satisfy umin < umax and vmin < vmax")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            umin,
            vmin,
            umax,
            vmax,
            category: category.into(),
            score,
        })
    }

    /// Half-open membership test on integer pixel coordinates.
    pub fn contains_pixel(&self, u: u32, v: u32) -> bool {
        let (u, v) = (u as f64, v as f64);
        self.umin <= u && u < self.umax && self.vmin <= v && v < self.vmax
    }
}

impl TryFrom<Box2DJson> for Box2D {
    type Error = Error;
    fn try_from(j: Box2DJson) -> Result<Self> {
        Box2D::new(j.bbox, j.category, j.score)
    }
}

impl From<Box2D> for Box2DJson {
    fn from(b: Box2D) -> Self {
        Box2DJson {
            bbox: [b.umin, b.vmin, b.umax, b.vmax],
            category: b.category,
            score: b.score,
        }
    }
}

/// Seven-parameter box: center, (L, W, H) and yaw about world +Z.
///
/// Yaw is kept in `[-π/2, π/2)`; a box turned by π is the same box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Box3DJson", into = "Box3DJson")]
pub struct Box3D {
    center: Vector3<f64>,
    dims: [f64; 3],
    yaw: f64,
    pub category: String,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Box3DJson {
    center: [f64; 3],
    dims: [f64; 3],
    yaw: f64,
    category: String,
    #[serde(default = "one")]
    score: f64,
}

/// Folds an angle into `[-π/2, π/2)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let y = (yaw + FRAC_PI_2).rem_euclid(PI);
    if y >= PI {
        -FRAC_PI_2
    } else {
        y - FRAC_PI_2
    }
}

impl Box3D {
    pub fn new(center: Vector3<f64>, dims: [f64; 3], yaw: f64, category: impl Into<String>, score: f64) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) || !yaw.is_finite() {
            return Err(Error::invalid("box center and yaw must be finite"));
        }
        if !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::invalid(format!("box dimensions {dims:?} must be positive")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            center,
            dims,
            yaw: normalize_yaw(yaw),
            category: category.into(),
            score,
        })
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn dims(&self) -> [f64; 3] {
        self.dims
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center.z - 0.5 * self.dims[2], self.center.z + 0.5 * self.dims[2])
    }

    /// Bird's-eye corners, counter-clockwise.
    pub fn bev_corners(&self) -> [nalgebra::Vector2<f64>; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (0.5 * self.dims[0], 0.5 * self.dims[1]);
        let mut out = [nalgebra::Vector2::zeros(); 4];
        for (k, (a, b)) in [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].into_iter().enumerate() {
            out[k] = nalgebra::Vector2::new(self.center.x + c * a - s * b, self.center.y + s * a + c * b);
        }
        out
    }

    /// Whether `p` lies inside the box grown by `margin` on every side.
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        let local = [c * d.x + s * d.y, -s * d.x + c * d.y, d.z];
        local.iter().zip(&self.dims).all(|(x, dim)| x.abs() <= 0.5 * dim + margin)
    }

    /// Same box moved by a rigid motion about world +Z.
    pub fn rotated_about_z(&self, angle: f64, translation: &Vector3<f64>) -> Box3D {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        Box3D {
            center: rot * self.center + translation,
            dims: self.dims,
            yaw: normalize_yaw(self.yaw + angle),
            category: self.category.clone(),
            score: self.score,
        }
    }

    pub fn with_label(mut self, category: impl Into<String>, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        self.category = category.into();
        self.score = score;
        Ok(self)
    }
}

impl TryFrom<Box3DJson> for Box3D {
    type Error = Error;
    fn try_from(j: Box3DJson) -> Result<Self> {
        Box3D::new(Vector3::from(j.center), j.dims, j.yaw, j.category, j.score)
    }
}

impl From<Box3D> for Box3DJson {
    fn from(b: Box3D) -> Self {
        Box3DJson {
            center: [b.center.x, b.center.y, b.center.z],
            dims: b.dims,
            yaw: b.yaw,
            category: b.category,
            score: b.score,
        }
    }
}

/// Points whose source pixel falls inside `bbox` (half-open), in input order.
pub fn frustum_points(cloud: &PointCloud, bbox: &Box2D) -> Result<PointCloud> {
    Ok(cloud.select(&frustum_indices(cloud, bbox)?))
}

pub fn frustum_indices(cloud: &PointCloud, bbox: &Box2D) -> Result<Vec<usize>> {
    let prov = cloud
        .provenance()
        .ok_or_else(|| Error::invalid("frustum lifting needs per-point pixel provenance"))?;
    Ok(prov
        .iter()
        .enumerate()
        .filter_map(|(i, [u, v])| bbox.contains_pixel(*u, *v).then_some(i))
        .collect())
}

/// Members of the largest cluster. Ties go to the cluster closer (mean
/// distance) to the centroid of all points, then to the lower id.
pub fn select_object_cluster(labeling: &ClusterLabeling, points: &PointCloud) -> Result<Vec<usize>> {
    if labeling.labels.len() != points.len() {
        return Err(Error::invalid("labeling does not match point count"));
    }
    if labeling.cluster_count == 0 {
        return Err(Error::EmptyCluster("every point is noise".into()));
    }
    let centroid = points.centroid();
    let mut size = vec![0usize; labeling.cluster_count];
    let mut dist = vec![0.0f64; labeling.cluster_count];
    for (p, &l) in points.points().iter().zip(&labeling.labels) {
        if l >= 0 {
            size[l as usize] += 1;
            dist[l as usize] += (p - centroid).norm();
        }
    }
    let mean = |c: usize| dist[c] / size[c] as f64;
    let mut best = 0;
    for c in 1..labeling.cluster_count {
        if size[c] > size[best] || (size[c] == size[best] && mean(c) < mean(best)) {
            best = c;
        }
    }
    Ok(labeling.members(best as i32))
}

/// Knobs of the per-box annotation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationParams {
    pub eps: f64,
    pub min_pts: usize,
    pub t: f64,
    pub unknown_category_policy: UnknownCategoryPolicy,
    /// When set, points within this height above the estimated floor are
    /// removed before clustering, so objects do not merge with the surface
    /// they rest on.
    pub floor_clearance: Option<f64>,
}

impl Default for AnnotationParams {
    fn default() -> Self {
        Self {
            eps: 0.1,
            min_pts: 10,
            t: 0.1,
            unknown_category_policy: UnknownCategoryPolicy::KeepWithWarning,
            floor_clearance: Some(0.05),
        }
    }
}

/// Why a 2D box produced no 3D box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum DropReason {
    EmptyCluster,
    DegenerateGeometry { detail: String },
    SizeFiltered { ratios: [f64; 3] },
    UnknownCategory,
}

impl DropReason {
    pub fn label(&self) -> &'static str {
        match self {
            DropReason::EmptyCluster => "empty-cluster",
            DropReason::DegenerateGeometry { .. } => "degenerate-geometry",
            DropReason::SizeFiltered { .. } => "size-filtered",
            DropReason::UnknownCategory => "unknown-category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedBox {
    pub index: usize,
    pub category: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptBox {
    /// Index of the originating 2D box.
    pub index: usize,
    /// Per-dimension ratios against the prior, when the category is known.
    pub ratios: Option<[f64; 3]>,
    pub unknown_category: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationOutput {
    pub boxes: Vec<Box3D>,
    pub kept: Vec<KeptBox>,
    pub dropped: Vec<DroppedBox>,
}

/// Height of the dominant low surface: the 1st percentile of point z.
pub fn estimate_floor_height(cloud: &PointCloud) -> Option<f64> {
    if cloud.is_empty() {
        return None;
    }
    let mut z: Vec<f64> = cloud.points().iter().map(|p| p.z).collect();
    let k = (z.len() - 1) / 100;
    let (_, v, _) = z.select_nth_unstable_by(k, f64::total_cmp);
    Some(*v)
}

enum Outcome {
    Kept(Box3D, KeptBox),
    Dropped(DroppedBox),
}

/// Lifts each 2D box into a filtered 3D box. Output order follows the input;
/// every 2D box ends up either kept or dropped with exactly one reason.
pub fn generate_annotations(
    cloud: &PointCloud,
    boxes2d: &[Box2D],
    priors: &SizePriorDB,
    params: &AnnotationParams,
) -> Result<AnnotationOutput> {
    if cloud.provenance().is_none() {
        return Err(Error::invalid("annotation needs a cloud with pixel provenance"));
    }
    if !(params.t > 0.0 && params.t < 1.0) {
        return Err(Error::invalid(format!("size threshold must lie in (0, 1), got {}", params.t)));
    }
    if !(params.eps > 0.0) || params.min_pts == 0 {
        return Err(Error::invalid("dbscan needs eps > 0 and min_pts >= 1"));
    }
    let floor_cut = match params.floor_clearance {
        Some(c) if c >= 0.0 => estimate_floor_height(cloud).map(|f| f + c),
        Some(c) => return Err(Error::invalid(format!("floor clearance must be >= 0, got {c}"))),
        None => None,
    };

    let outcomes: Vec<Outcome> = boxes2d
        .par_iter()
        .enumerate()
        .map(|(index, b2)| annotate_one(cloud, index, b2, priors, params, floor_cut))
        .collect::<Result<_>>()?;

    let mut out = AnnotationOutput::default();
    for o in outcomes {
        match o {
            Outcome::Kept(b, k) => {
                out.boxes.push(b);
                out.kept.push(k);
            }
            Outcome::Dropped(d) => {
                tracing::info!(index = d.index, category = %d.category, reason = d.reason.label(), "dropped box");
                out.dropped.push(d);
            }
        }
    }
    Ok(out)
}

fn annotate_one(
    cloud: &PointCloud,
    index: usize,
    b2: &Box2D,
    priors: &SizePriorDB,
    params: &AnnotationParams,
    floor_cut: Option<f64>,
) -> Result<Outcome> {
    let drop = |reason| {
        Ok(Outcome::Dropped(DroppedBox {
            index,
            category: b2.category.clone(),
            reason,
        }))
    };
    let mut idx = frustum_indices(cloud, b2)?;
    if let Some(cut) = floor_cut {
        idx.retain(|&i| cloud.points()[i].z >= cut);
    }
    let frustum = cloud.select(&idx);
    let labels = dbscan(&frustum, params.eps, params.min_pts)?;
    let members = match select_object_cluster(&labels, &frustum) {
        Ok(m) => m,
        Err(Error::EmptyCluster(_)) => return drop(DropReason::EmptyCluster),
        Err(e) => return Err(e),
    };
    let fitted = match fit_box(&frustum.select(&members)) {
        Ok(b) => b.with_label(b2.category.clone(), b2.score)?,
        Err(Error::DegenerateGeometry(detail)) => return drop(DropReason::DegenerateGeometry { detail }),
        Err(e) => return Err(e),
    };
    let decision = size_filter(&fitted, priors, params.t, params.unknown_category_policy)?;
    if decision.keep {
        if decision.unknown_category {
            tracing::warn!(index, category = %b2.category, "category missing from size priors; kept");
        }
        Ok(Outcome::Kept(
            fitted,
            KeptBox {
                index,
                ratios: decision.ratios,
                unknown_category: decision.unknown_category,
            },
        ))
    } else if decision.unknown_category {
        drop(DropReason::UnknownCategory)
    } else {
        drop(DropReason::SizeFiltered {
            ratios: decision.ratios.expect("known category has ratios"),
        })
    }
}
