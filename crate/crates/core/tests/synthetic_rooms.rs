use scenelift_core::annotate::{generate_annotations, AnnotationParams};
use scenelift_core::depth::lift_depth;
use scenelift_core::eval::{iou3d, mean_ap, DetectionSet, GroundTruthSet, IouMode, SceneBoxes};
use scenelift_core::rotation::{correct_orientation, OrientationParams, Z_AXIS};
use scenelift_core::synth::{template_priors, RoomGenerator};

#[test]
fn library_pipeline_recovers_room_boxes() {
    let generator = RoomGenerator::default();
    let priors = template_priors();
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    let mut ious = Vec::new();
    for seed in 0..8u64 {
        let scene = generator.generate(seed).unwrap();
        let cloud = lift_depth(&scene.depth, &scene.camera).unwrap();
        let fixed = correct_orientation(&cloud, &scene.depth, &scene.camera, &OrientationParams::default()).unwrap();
        let up = fixed.rotation.apply(&scene.floor_normal_camera());
        assert!(up.dot(&Z_AXIS) > (0.5f64).to_radians().cos(), "seed {seed}: floor tilted");

        let out = generate_annotations(&fixed.cloud, &scene.boxes2d, &priors, &AnnotationParams::default()).unwrap();
        let gt = scene.ground_truth_aligned().unwrap();
        for (b, k) in out.boxes.iter().zip(&out.kept) {
            ious.push(iou3d(b, &gt[k.index]));
        }
        assert!(out.dropped.is_empty(), "seed {seed}: {:?}", out.dropped);
        dets.push(SceneBoxes { scene: format!("room{seed}"), boxes: out.boxes });
        gts.push(SceneBoxes { scene: format!("room{seed}"), boxes: gt });
    }
    let dets = DetectionSet::new(dets).unwrap();
    let gts = GroundTruthSet::new(gts).unwrap();
    let report = mean_ap(&dets, &gts, &gts.categories(), 0.25, IouMode::Rotated).unwrap();
    eprintln!("ious {ious:?}");
    assert!(report.mean_ap >= 0.9, "{report:?}");
}

#[test]
fn floor_wins_normal_consensus() {
    let generator = RoomGenerator {
        width: 160,
        height: 120,
        min_visible_px: 60,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..150u64 {
        let scene = generator.generate(seed).unwrap();
        let cloud = lift_depth(&scene.depth, &scene.camera).unwrap();
        let fixed = correct_orientation(&cloud, &scene.depth, &scene.camera, &OrientationParams::default()).unwrap();
        let up = fixed.rotation.apply(&scene.floor_normal_camera());
        let angle = up.dot(&Z_AXIS).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 0.5, "seed {seed}: floor off by {angle} deg");
        worst = worst.max(angle);
    }
    eprintln!("worst floor error {worst:e} deg");
}
