//! Per-input stages shared by the single-step commands and `pipeline`.

use std::path::Path;

use serde::Serialize;

use scenelift_core::annotate::{generate_annotations, AnnotationOutput};
use scenelift_core::depth::lift_depth;
use scenelift_core::io;
use scenelift_core::render::{
    best_compact_view, compactness, make_training_renders, render_depth, sweep_renders, sweep_viewpoints, Viewpoint,
    ViewpointRecord,
};
use scenelift_core::rotation::correct_orientation_with_normals;
use scenelift_core::normals::{estimate_normals, NormalMap};
use scenelift_core::{Box2D, CameraModel, DepthImage, Error, PointCloud, SizePriorDB};

use crate::config::{PipelineConfig, RenderMode};
use crate::error::CliResult;
use crate::manifest::{AnnotateSummary, LiftSummary, RenderSummary};
use crate::output::Staging;

/// Camera from a JSON file, or from the configured FOV and the image size.
pub fn resolve_camera(depth: &DepthImage, camera_path: Option<&Path>, cfg: &PipelineConfig) -> CliResult<CameraModel> {
    match camera_path {
        Some(p) => {
            let cam: CameraModel = io::read_json(p)?;
            if (cam.width(), cam.height()) != (depth.width(), depth.height()) {
                return Err(Error::InvalidArgument(format!(
                    "camera {} is {}x{} but the depth image is {}x{}",
                    p.display(),
                    cam.width(),
                    cam.height(),
                    depth.width(),
                    depth.height()
                ))
                .into());
            }
            Ok(cam)
        }
        None => Ok(CameraModel::from_fov(depth.width(), depth.height(), cfg.fov_deg, cfg.fov_axis)?),
    }
}

pub struct Lifted {
    pub cloud: PointCloud,
    /// Camera viewing `cloud` from the original viewpoint (with the gravity
    /// correction folded in when applied).
    pub camera: CameraModel,
    pub summary: LiftSummary,
}

pub fn lift(
    depth: &DepthImage,
    camera: CameraModel,
    normals_path: Option<&Path>,
    gravity_align: bool,
    cfg: &PipelineConfig,
) -> CliResult<Lifted> {
    let cloud = lift_depth(depth, &camera)?;
    let mut summary = LiftSummary {
        width: depth.width(),
        height: depth.height(),
        valid_pixels: depth.valid_count(),
        points: cloud.len(),
        camera: camera.clone(),
        gravity_aligned: gravity_align,
        normals_source: None,
        rotation: None,
        consensus: None,
        low_confidence: None,
    };
    if !gravity_align {
        return Ok(Lifted { cloud, camera, summary });
    }
    let (normals, source): (NormalMap, String) = match normals_path {
        Some(p) => (io::read_normals(p)?.with_origin_depth(depth)?, "file".into()),
        None => (estimate_normals(depth, &camera)?, "geometric".into()),
    };
    let fix = correct_orientation_with_normals(&cloud, &normals, &camera, &cfg.orientation_params())?;
    if fix.low_confidence {
        tracing::warn!(
            inlier_fraction = fix.consensus.inlier_fraction,
            "weak floor-normal consensus; alignment may be unreliable"
        );
    }
    let corrected = fix.corrected_camera(&camera)?;
    summary.normals_source = Some(source);
    summary.rotation = Some(fix.rotation);
    summary.consensus = Some(fix.consensus);
    summary.low_confidence = Some(fix.low_confidence);
    Ok(Lifted {
        cloud: fix.cloud,
        camera: corrected,
        summary,
    })
}

pub fn annotate(
    cloud: &PointCloud,
    boxes2d: &[Box2D],
    priors: &SizePriorDB,
    cfg: &PipelineConfig,
) -> CliResult<(AnnotationOutput, AnnotateSummary)> {
    let out = generate_annotations(cloud, boxes2d, priors, &cfg.annotation_params())?;
    let summary = AnnotateSummary {
        detections: boxes2d.len(),
        kept: out.kept.clone(),
        dropped: out.dropped.clone(),
    };
    Ok((out, summary))
}

fn angle_tag(h: f64, v: f64) -> String {
    format!("h{:+04}_v{:+04}", h.round() as i64, v.round() as i64)
}

#[derive(Serialize)]
struct RenderEntry {
    file: String,
    viewpoint: ViewpointRecord,
    camera: CameraModel,
    compactness: f64,
    valid_pixels: usize,
}

#[derive(Serialize)]
struct PartialEntry {
    file: String,
    view_a: ViewpointRecord,
    view_b: ViewpointRecord,
    remaining_points: usize,
    compactness: f64,
}

#[derive(Serialize)]
struct Candidate {
    viewpoint: ViewpointRecord,
    compactness: f64,
}

#[derive(Serialize)]
struct Sidecar<T: Serialize> {
    mode: RenderMode,
    pivot: [f64; 3],
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Entries<T: Serialize> {
    entries: Vec<T>,
}

#[derive(Serialize)]
struct CompactBody {
    best: RenderEntry,
    candidates: Vec<Candidate>,
}

fn sidecar<T: Serialize>(mode: RenderMode, pivot: [f64; 3], body: T) -> Vec<u8> {
    io::to_json_bytes(&Sidecar { mode, pivot, body })
}

/// Renders `cloud` in `mode`, staging images under `prefix` plus one JSON
/// sidecar.
pub fn render(
    cloud: &PointCloud,
    camera: &CameraModel,
    mode: RenderMode,
    view: (f64, f64),
    cfg: &PipelineConfig,
    staging: &mut Staging,
    prefix: &str,
) -> CliResult<RenderSummary> {
    let ext = cfg.io.depth_format.extension();
    let pivot = cloud.centroid();
    let splat = cfg.renderer.splat_px;
    let encode = |img: &DepthImage, name: &str| io::encode_depth(Path::new(name), img);
    let entry = |file: String, v: &Viewpoint, img: &DepthImage| RenderEntry {
        file,
        viewpoint: v.into(),
        camera: v.camera(&pivot),
        compactness: compactness(img),
        valid_pixels: img.valid_count(),
    };
    let sidecar_name = format!("{prefix}.{}.json", mode_name(mode));
    let pivot_xyz: [f64; 3] = pivot.into();

    let (images, sidecar) = match mode {
        RenderMode::Single => {
            let v = Viewpoint::new(view.0, view.1, camera.clone())?;
            let img = render_depth(cloud, &v.camera(&pivot), splat)?;
            let file = format!("{prefix}.{ext}");
            staging.write(&file, &encode(&img, &file)?)?;
            (1, sidecar(mode, pivot_xyz, entry(file, &v, &img)))
        }
        RenderMode::Sweep => {
            let dir = format!("{prefix}.sweep");
            let mut entries = Vec::new();
            for (v, img) in sweep_renders(cloud, camera, splat)? {
                let file = format!("{dir}/{}.{ext}", angle_tag(v.theta_h(), v.theta_v()));
                staging.write(&file, &encode(&img, &file)?)?;
                entries.push(entry(file, &v, &img));
            }
            (entries.len(), sidecar(mode, pivot_xyz, Entries { entries }))
        }
        RenderMode::Partial => {
            let dir = format!("{prefix}.partial");
            let base = Viewpoint::base_view(camera.clone());
            let mut entries = Vec::new();
            for r in make_training_renders(cloud, camera, &cfg.render_params())? {
                let (h, v) = r.removed_view.angles();
                let file = format!("{dir}/minus_{}.{ext}", angle_tag(h, v));
                staging.write(&file, &encode(&r.image, &file)?)?;
                entries.push(PartialEntry {
                    file,
                    view_a: (&base).into(),
                    view_b: (&r.removed_view).into(),
                    remaining_points: r.remaining_points,
                    compactness: compactness(&r.image),
                });
            }
            (entries.len(), sidecar(mode, pivot_xyz, Entries { entries }))
        }
        RenderMode::Compact => {
            let candidates = sweep_viewpoints(camera);
            let best = best_compact_view(cloud, &candidates, splat)?;
            let file = format!("{prefix}.compact.{ext}");
            staging.write(&file, &encode(&best.image, &file)?)?;
            let body = CompactBody {
                best: entry(file, &best.view, &best.image),
                candidates: candidates
                    .iter()
                    .zip(&best.scores)
                    .map(|(v, s)| Candidate {
                        viewpoint: v.into(),
                        compactness: *s,
                    })
                    .collect(),
            };
            (1, sidecar(mode, pivot_xyz, body))
        }
    };
    staging.write(&sidecar_name, &sidecar)?;
    Ok(RenderSummary {
        mode,
        images,
        sidecar: sidecar_name,
    })
}

pub fn mode_name(mode: RenderMode) -> &'static str {
    match mode {
        RenderMode::Single => "single",
        RenderMode::Sweep => "sweep",
        RenderMode::Partial => "partial",
        RenderMode::Compact => "compact",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_tags_sort_and_sign() {
        assert_eq!(angle_tag(-75.0, 0.0), "h-075_v+000");
        assert_eq!(angle_tag(15.0, -60.0), "h+015_v-060");
    }
}
