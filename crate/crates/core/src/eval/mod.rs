//! Detection metrics: rotated 3D IoU, AP / mAP at a fixed IoU threshold, and
//! volume-ratio density statistics.

mod ap;
mod iou;
mod kde;
mod ratio;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use ap::{average_precision, mean_ap, ClassAp, MeanApReport};
pub use iou::{clip_convex, iou3d, iou3d_axis_aligned, polygon_area};
pub use kde::{kde, silverman_bandwidth, Bandwidth, GaussianKde, KdeCurve, KDE_GRID_POINTS};
pub use ratio::{ratio_report, CategoryRatios, RatioReference, RatioReport};

use crate::annotate::Box3D;
use crate::error::{Error, Result};

/// Boxes belonging to one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBoxes {
    pub scene: String,
    pub boxes: Vec<Box3D>,
}

fn check_unique(scenes: &[SceneBoxes]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in scenes {
        if !seen.insert(s.scene.as_str()) {
            return Err(Error::invalid(format!("duplicate scene id `{}`", s.scene)));
        }
    }
    Ok(())
}

/// Scored detections grouped by scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SceneBoxes>", into = "Vec<SceneBoxes>")]
pub struct DetectionSet(Vec<SceneBoxes>);

/// Ground-truth boxes grouped by scene; scores are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SceneBoxes>", into = "Vec<SceneBoxes>")]
pub struct GroundTruthSet(Vec<SceneBoxes>);

impl DetectionSet {
    pub fn new(scenes: Vec<SceneBoxes>) -> Result<Self> {
        check_unique(&scenes)?;
        Ok(Self(scenes))
    }

    pub fn scenes(&self) -> &[SceneBoxes] {
        &self.0
    }
}

impl GroundTruthSet {
    pub fn new(scenes: Vec<SceneBoxes>) -> Result<Self> {
        check_unique(&scenes)?;
        if let Some(s) = scenes.iter().find(|s| s.boxes.iter().any(|b| b.category.trim().is_empty())) {
            return Err(Error::invalid(format!("scene `{}` has a box without category", s.scene)));
        }
        Ok(Self(scenes))
    }

    pub fn scenes(&self) -> &[SceneBoxes] {
        &self.0
    }

    pub fn scene(&self, id: &str) -> Option<&SceneBoxes> {
        self.0.iter().find(|s| s.scene == id)
    }

    /// Distinct normalised categories in first-appearance order.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for b in self.0.iter().flat_map(|s| &s.boxes) {
            let c = crate::priors::normalize_category(&b.category);
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        out
    }
}

impl TryFrom<Vec<SceneBoxes>> for DetectionSet {
    type Error = Error;
    fn try_from(v: Vec<SceneBoxes>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DetectionSet> for Vec<SceneBoxes> {
    fn from(d: DetectionSet) -> Self {
        d.0
    }
}

impl TryFrom<Vec<SceneBoxes>> for GroundTruthSet {
    type Error = Error;
    fn try_from(v: Vec<SceneBoxes>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GroundTruthSet> for Vec<SceneBoxes> {
    fn from(d: GroundTruthSet) -> Self {
        d.0
    }
}

/// Which IoU the matcher uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouMode {
    #[default]
    Rotated,
    AxisAligned,
}

impl IouMode {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouMode::Rotated => iou3d(a, b),
            IouMode::AxisAligned => iou3d_axis_aligned(a, b),
        }
    }
}
