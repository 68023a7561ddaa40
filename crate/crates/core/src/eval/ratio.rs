use std::collections::HashMap;

use serde::Serialize;

use super::{iou3d, DetectionSet, GroundTruthSet, KdeCurve};
use crate::error::{Error, Result};
use crate::eval::{kde, Bandwidth};
use crate::priors::{normalize_category, volume_ratio_dims, SizePriorDB};

/// What each box's volume is compared against.
#[derive(Debug, Clone, Copy)]
pub enum RatioReference<'a> {
    Priors(&'a SizePriorDB),
    /// Dimensions of the same-scene, same-category ground truth box with the
    /// highest (non-zero) rotated IoU.
    GroundTruth(&'a GroundTruthSet),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRatios {
    pub category: String,
    pub instances: usize,
    pub ratios: Vec<f64>,
    pub kde: Option<KdeCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub categories: Vec<CategoryRatios>,
}

/// Volume ratios and their KDE for the `top_k` most frequent categories.
pub fn ratio_report(boxes: &DetectionSet, refs: RatioReference<'_>, top_k: usize) -> Result<RatioReport> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for b in boxes.scenes().iter().flat_map(|s| &s.boxes) {
        *counts.entry(normalize_category(&b.category)).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::NoData("no boxes to compare".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);

    let mut categories = Vec::with_capacity(ranked.len());
    for (category, instances) in ranked {
        let mut ratios = Vec::new();
        for scene in boxes.scenes() {
            for b in scene.boxes.iter().filter(|b| normalize_category(&b.category) == category) {
                let reference = match refs {
                    RatioReference::Priors(db) => db.get(&category),
                    RatioReference::GroundTruth(gts) => gts.scene(&scene.scene).and_then(|g| {
                        g.boxes
                            .iter()
                            .filter(|gt| normalize_category(&gt.category) == category)
                            .map(|gt| (iou3d(b, gt), gt))
                            .filter(|(iou, _)| *iou > 0.0)
                            .max_by(|x, y| x.0.total_cmp(&y.0))
                            .map(|(_, gt)| gt.dims())
                    }),
                };
                if let Some(r) = reference {
                    ratios.push(volume_ratio_dims(b.dims(), r)?);
                }
            }
        }
        let kde = if ratios.is_empty() {
            None
        } else {
            Some(kde(&ratios, Bandwidth::Auto)?)
        };
        categories.push(CategoryRatios {
            category,
            instances,
            ratios,
            kde,
        });
    }
    Ok(RatioReport { categories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Box3D;
    use crate::eval::SceneBoxes;
    use nalgebra::Vector3;

    fn bx(cat: &str, dims: [f64; 3]) -> Box3D {
        Box3D::new(Vector3::zeros(), dims, 0.0, cat, 1.0).unwrap()
    }

    #[test]
    fn identical_to_priors_peaks_at_one() {
        let db = SizePriorDB::from_json(br#"{"chair":[0.6,0.5,0.9],"bed":[2,1.5,0.5]}"#).unwrap();
        let dets = DetectionSet::new(vec![SceneBoxes {
            scene: "a".into(),
            boxes: vec![bx("chair", [0.6, 0.5, 0.9]), bx("chair", [0.5, 0.6, 0.9]), bx("bed", [2.0, 1.5, 0.5])],
        }])
        .unwrap();
        let r = ratio_report(&dets, RatioReference::Priors(&db), 10).unwrap();
        assert_eq!(r.categories.len(), 2);
        assert_eq!(r.categories[0].category, "chair");
        for c in &r.categories {
            for x in &c.ratios {
                assert!((x - 1.0).abs() < 1e-12);
            }
            let k = c.kde.as_ref().unwrap();
            assert!((k.argmax() - 1.0).abs() <= k.step());
        }
        let top1 = ratio_report(&dets, RatioReference::Priors(&db), 1).unwrap();
        assert_eq!(top1.categories.len(), 1);
    }

    #[test]
    fn ground_truth_reference() {
        let gts = GroundTruthSet::new(vec![SceneBoxes {
            scene: "a".into(),
            boxes: vec![bx("chair", [1.0, 1.0, 1.0])],
        }])
        .unwrap();
        let dets = DetectionSet::new(vec![SceneBoxes {
            scene: "a".into(),
            boxes: vec![bx("chair", [2.0, 1.0, 1.0])],
        }])
        .unwrap();
        let r = ratio_report(&dets, RatioReference::GroundTruth(&gts), 10).unwrap();
        assert_eq!(r.categories[0].ratios, vec![2.0]);
    }

    #[test]
    fn empty_is_no_data() {
        let db = SizePriorDB::default();
        assert!(matches!(
            ratio_report(&DetectionSet::default(), RatioReference::Priors(&db), 10),
            Err(Error::NoData(_))
        ));
    }
}
