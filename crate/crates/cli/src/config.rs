//! Run configuration: defaults, overridden by a TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scenelift_core::annotate::{AnnotationParams, UnknownCategoryPolicy};
use scenelift_core::eval::IouMode;
use scenelift_core::normals::NormalPrefilter;
use scenelift_core::render::RenderParams;
use scenelift_core::rotation::OrientationParams;
use scenelift_core::FovAxis;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fov_deg: f64,
    pub fov_axis: FovAxis,
    pub dbscan: DbscanConfig,
    pub size_filter: SizeFilterConfig,
    pub annotate: AnnotateConfig,
    pub renderer: RendererConfig,
    pub normals: NormalsConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeFilterConfig {
    pub t: f64,
    pub unknown_category_policy: UnknownCategoryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    /// Drop frustum points near the floor before clustering.
    pub remove_floor: bool,
    pub floor_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Single,
    Sweep,
    Partial,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RendererConfig {
    pub depth_tol: f64,
    pub splat_px: usize,
    /// Render stages run per input by `pipeline`.
    pub pipeline_modes: Vec<RenderMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalsConfig {
    pub bin_deg: f64,
    pub inlier_warn_threshold: f64,
    pub prefilter: Option<NormalPrefilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresh: f64,
    pub rotated: bool,
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Png,
    Pfm,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Png => "png",
            DepthFormat::Pfm => "pfm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Format of rendered depth images.
    pub depth_format: DepthFormat,
    #[serde(skip_serializing_if = "is_empty_path")]
    pub output_dir: PathBuf,
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let annotate = AnnotationParams::default();
        let render = RenderParams::default();
        let orient = OrientationParams::default();
        Self {
            fov_deg: 55.0,
            fov_axis: FovAxis::Horizontal,
            dbscan: DbscanConfig {
                eps: annotate.eps,
                min_pts: annotate.min_pts,
            },
            size_filter: SizeFilterConfig {
                t: annotate.t,
                unknown_category_policy: annotate.unknown_category_policy,
            },
            annotate: AnnotateConfig {
                remove_floor: annotate.floor_clearance.is_some(),
                floor_clearance: annotate.floor_clearance.unwrap_or(0.05),
            },
            renderer: RendererConfig {
                depth_tol: render.depth_tol,
                splat_px: render.splat_px,
                pipeline_modes: vec![RenderMode::Sweep, RenderMode::Partial],
            },
            normals: NormalsConfig {
                bin_deg: orient.bin_deg,
                inlier_warn_threshold: orient.inlier_warn_threshold,
                prefilter: orient.prefilter,
            },
            eval: EvalConfig {
                iou_thresh: 0.25,
                rotated: true,
                top_k: 10,
            },
            io: IoConfig {
                depth_format: DepthFormat::Png,
                output_dir: PathBuf::from("out"),
            },
        }
    }
}

macro_rules! defaults_from_parent {
    ($($t:ident => $field:ident),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                PipelineConfig::default().$field
            }
        }
    )*};
}

defaults_from_parent!(
    DbscanConfig => dbscan,
    SizeFilterConfig => size_filter,
    AnnotateConfig => annotate,
    RendererConfig => renderer,
    NormalsConfig => normals,
    EvalConfig => eval,
    IoConfig => io
);

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return fail(format!("fov_deg must lie in (0, 180), got {}", self.fov_deg));
        }
        if !(self.dbscan.eps > 0.0 && self.dbscan.eps.is_finite()) || self.dbscan.min_pts == 0 {
            return fail("dbscan needs eps > 0 and min_pts >= 1".into());
        }
        if !(self.size_filter.t > 0.0 && self.size_filter.t < 1.0) {
            return fail(format!("size_filter.t must lie in (0, 1), got {}", self.size_filter.t));
        }
        if !(self.annotate.floor_clearance >= 0.0 && self.annotate.floor_clearance.is_finite()) {
            return fail("annotate.floor_clearance must be >= 0".into());
        }
        if !(self.renderer.depth_tol > 0.0 && self.renderer.depth_tol.is_finite()) {
            return fail("renderer.depth_tol must be > 0".into());
        }
        if self.renderer.splat_px == 0 || self.renderer.splat_px.is_multiple_of(2) {
            return fail(format!("renderer.splat_px must be odd and >= 1, got {}", self.renderer.splat_px));
        }
        if !(1.0..=45.0).contains(&self.normals.bin_deg) {
            return fail(format!("normals.bin_deg must lie in [1, 45], got {}", self.normals.bin_deg));
        }
        if !(0.0..=1.0).contains(&self.normals.inlier_warn_threshold) {
            return fail("normals.inlier_warn_threshold must lie in [0, 1]".into());
        }
        if let Some(p) = &self.normals.prefilter {
            if !(p.max_angle_deg > 0.0 && p.max_angle_deg <= 180.0) {
                return fail("normals.prefilter.max_angle_deg must lie in (0, 180]".into());
            }
        }
        if !(self.eval.iou_thresh > 0.0 && self.eval.iou_thresh < 1.0) {
            return fail(format!("eval.iou_thresh must lie in (0, 1), got {}", self.eval.iou_thresh));
        }
        if self.eval.top_k == 0 {
            return fail("eval.top_k must be >= 1".into());
        }
        Ok(())
    }

    /// The configuration with the output directory stripped, as recorded in
    /// run manifests so that reruns into different directories match.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.io.output_dir = PathBuf::new();
        c
    }

    /// SHA-256 over every parameter that can change data outputs (the output
    /// directory is excluded).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.effective()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn annotation_params(&self) -> AnnotationParams {
        AnnotationParams {
            eps: self.dbscan.eps,
            min_pts: self.dbscan.min_pts,
            t: self.size_filter.t,
            unknown_category_policy: self.size_filter.unknown_category_policy,
            floor_clearance: self.annotate.remove_floor.then_some(self.annotate.floor_clearance),
        }
    }

    pub fn orientation_params(&self) -> OrientationParams {
        OrientationParams {
            bin_deg: self.normals.bin_deg,
            inlier_warn_threshold: self.normals.inlier_warn_threshold,
            prefilter: self.normals.prefilter,
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            depth_tol: self.renderer.depth_tol,
            splat_px: self.renderer.splat_px,
        }
    }

    pub fn iou_mode(&self) -> IouMode {
        if self.eval.rotated {
            IouMode::Rotated
        } else {
            IouMode::AxisAligned
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn nested_override() {
        let c = PipelineConfig::from_toml("fov_deg = 60\n[dbscan]\neps = 0.2\n[size_filter]\nunknown_category_policy = \"reject\"\n")
            .unwrap();
        assert_eq!(c.fov_deg, 60.0);
        assert_eq!(c.dbscan.eps, 0.2);
        assert_eq!(c.dbscan.min_pts, 10);
        assert_eq!(c.size_filter.unknown_category_policy, UnknownCategoryPolicy::Reject);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("fov = 55").is_err());
        assert!(PipelineConfig::from_toml("[dbscan]\nepsilon = 0.1").is_err());
    }

    #[test]
    fn range_checks() {
        let mut c = PipelineConfig::default();
        c.size_filter.t = 1.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.renderer.splat_px = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_effective_parameters_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.io.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.dbscan.min_pts = 11;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
