use std::collections::HashMap;

use serde::Serialize;

use super::{DetectionSet, GroundTruthSet, IouMode};
use crate::annotate::Box3D;
use crate::error::{Error, Result};
use crate::priors::normalize_category;

/// Average precision of one category with all-points interpolation.
///
/// Detections are pooled over scenes and ranked by score (ties: scene id,
/// then input order). Each takes the unmatched same-scene ground truth with
/// the highest IoU at or above `iou_thresh`; otherwise it is a false
/// positive. Returns `None` when the category has no ground truth.
pub fn average_precision(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    category: &str,
    iou_thresh: f64,
    mode: IouMode,
) -> Result<Option<f64>> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::invalid(format!("IoU threshold must lie in (0, 1), got {iou_thresh}")));
    }
    let category = normalize_category(category);
    let is_cat = |b: &Box3D| normalize_category(&b.category) == category;

    let gt_by_scene: HashMap<&str, Vec<&Box3D>> = gts
        .scenes()
        .iter()
        .map(|s| (s.scene.as_str(), s.boxes.iter().filter(|b| is_cat(b)).collect()))
        .collect();
    let npos: usize = gt_by_scene.values().map(Vec::len).sum();
    if npos == 0 {
        return Ok(None);
    }

    let mut ranked: Vec<(&str, usize, &Box3D)> = Vec::new();
    let mut order = 0;
    for s in dets.scenes() {
        for b in &s.boxes {
            if is_cat(b) {
                ranked.push((s.scene.as_str(), order, b));
            }
            order += 1;
        }
    }
    ranked.sort_by(|a, b| {
        b.2.score
            .total_cmp(&a.2.score)
            .then_with(|| a.0.cmp(b.0))
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut taken: HashMap<&str, Vec<bool>> = gt_by_scene.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    for (k, (scene, _, det)) in ranked.iter().enumerate() {
        if let (Some(cands), Some(used)) = (gt_by_scene.get(scene), taken.get_mut(scene)) {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in cands.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let iou = mode.iou(det, gt);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
                tp += 1;
            }
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / npos as f64);
    }

    // Monotone envelope from the right, then sum precision over recall steps.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Ok(Some(ap))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub category: String,
    /// `None` when the category has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanApReport {
    pub per_class: Vec<ClassAp>,
    pub mean_ap: f64,
    pub iou_thresh: f64,
    pub iou_mode: IouMode,
    pub interpolation: &'static str,
    pub matching: &'static str,
}

/// Mean of the defined per-class APs over `categories`.
pub fn mean_ap(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    categories: &[String],
    iou_thresh: f64,
    mode: IouMode,
) -> Result<MeanApReport> {
    if categories.is_empty() {
        return Err(Error::invalid("no categories to evaluate"));
    }
    let per_class = categories
        .iter()
        .map(|c| {
            Ok(ClassAp {
                category: c.clone(),
                ap: average_precision(dets, gts, c, iou_thresh, mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    if defined.is_empty() {
        return Err(Error::NoData("no category has ground truth".into()));
    }
    for c in per_class.iter().filter(|c| c.ap.is_none()) {
        tracing::warn!(category = %c.category, "AP undefined (no ground truth); excluded from mean");
    }
    Ok(MeanApReport {
        mean_ap: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
        iou_thresh,
        iou_mode: mode,
        interpolation: "all-points",
        matching: "greedy-by-score",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SceneBoxes;
    use nalgebra::Vector3;

    fn bx(x: f64, cat: &str, score: f64) -> Box3D {
        Box3D::new(Vector3::new(x, 0.0, 0.0), [1.0; 3], 0.0, cat, score).unwrap()
    }

    fn set(boxes: Vec<Box3D>) -> Vec<SceneBoxes> {
        vec![SceneBoxes {
            scene: "s0".into(),
            boxes,
        }]
    }

    #[test]
    fn perfect_single() {
        let gts = GroundTruthSet::new(set(vec![bx(0.0, "chair", 1.0)])).unwrap();
        let dets = DetectionSet::new(set(vec![bx(0.0, "chair", 0.9)])).unwrap();
        assert_eq!(average_precision(&dets, &gts, "chair", 0.25, IouMode::Rotated).unwrap(), Some(1.0));
    }

    #[test]
    fn miss_then_hit_is_half() {
        let gts = GroundTruthSet::new(set(vec![bx(0.0, "chair", 1.0)])).unwrap();
        let dets = DetectionSet::new(set(vec![bx(5.0, "chair", 0.9), bx(0.0, "chair", 0.5)])).unwrap();
        assert_eq!(average_precision(&dets, &gts, "chair", 0.25, IouMode::Rotated).unwrap(), Some(0.5));
    }

    #[test]
    fn no_detections_and_undefined() {
        let gts = GroundTruthSet::new(set(vec![bx(0.0, "chair", 1.0)])).unwrap();
        let dets = DetectionSet::default();
        assert_eq!(average_precision(&dets, &gts, "chair", 0.25, IouMode::Rotated).unwrap(), Some(0.0));
        assert_eq!(average_precision(&dets, &gts, "sofa", 0.25, IouMode::Rotated).unwrap(), None);
        assert!(average_precision(&dets, &gts, "chair", 1.0, IouMode::Rotated).is_err());
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let gts = GroundTruthSet::new(set(vec![bx(0.0, "chair", 1.0)])).unwrap();
        let dets = DetectionSet::new(set(vec![bx(0.0, "chair", 0.9), bx(0.0, "chair", 0.8)])).unwrap();
        assert_eq!(average_precision(&dets, &gts, "chair", 0.25, IouMode::Rotated).unwrap(), Some(1.0));
    }

    #[test]
    fn mean_excludes_undefined() {
        let gts = GroundTruthSet::new(set(vec![bx(0.0, "chair", 1.0), bx(10.0, "bed", 1.0)])).unwrap();
        let dets = DetectionSet::new(set(vec![bx(0.0, "chair", 0.9)])).unwrap();
        let cats: Vec<String> = ["chair", "bed", "lamp"].iter().map(|s| s.to_string()).collect();
        let r = mean_ap(&dets, &gts, &cats, 0.25, IouMode::Rotated).unwrap();
        assert_eq!(r.mean_ap, 0.5);
        assert_eq!(r.per_class[2].ap, None);
        let only_lamp = vec!["lamp".to_string()];
        assert!(matches!(
            mean_ap(&dets, &gts, &only_lamp, 0.25, IouMode::Rotated),
            Err(Error::NoData(_))
        ));
        assert!(mean_ap(&dets, &gts, &[], 0.25, IouMode::Rotated).is_err());
    }

    #[test]
    fn duplicate_scene_ids_rejected() {
        let mut s = set(vec![]);
        s.extend(set(vec![]));
        assert!(DetectionSet::new(s).is_err());
    }
}
