use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenelift_core::annotate::UnknownCategoryPolicy;
use scenelift_core::FovAxis;

use crate::config::{DepthFormat, RenderMode};

#[derive(Debug, Parser)]
#[command(name = "scenelift", version, about = "Depth lifting, pseudo 3D annotation, partial-view rendering and 3D detection evaluation")]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Reserved; no stage is stochastic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    /// Format of rendered depth images.
    #[arg(long, global = true, value_enum)]
    pub depth_format: Option<DepthFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift a depth image (16-bit PNG in mm or PFM in m) into a PLY point cloud.
    Lift(LiftArgs),
    /// Turn 2D detections into size-filtered 3D boxes.
    Annotate(AnnotateArgs),
    /// Render a point cloud back into depth images.
    Render(RenderArgs),
    /// Score 3D detections against ground truth (AP, volume ratios).
    Evaluate(EvaluateArgs),
    /// Run lift, gravity alignment, annotation and rendering over a manifest.
    Pipeline(PipelineArgs),
    /// Validate a size-prior file.
    PriorsCheck(PriorsCheckArgs),
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    /// Camera JSON; when absent intrinsics come from the FOV and image size.
    #[arg(long)]
    pub camera: Option<PathBuf>,

    #[arg(long)]
    pub fov_deg: Option<f64>,

    #[arg(long, value_enum)]
    pub fov_axis: Option<FovAxisArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FovAxisArg {
    Horizontal,
    Vertical,
    Diagonal,
}

impl From<FovAxisArg> for FovAxis {
    fn from(a: FovAxisArg) -> Self {
        match a {
            FovAxisArg::Horizontal => FovAxis::Horizontal,
            FovAxisArg::Vertical => FovAxis::Vertical,
            FovAxisArg::Diagonal => FovAxis::Diagonal,
        }
    }
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    pub depth: PathBuf,

    #[command(flatten)]
    pub camera: CameraArgs,

    /// Rotate the cloud so the dominant horizontal surface faces +Z.
    #[arg(long)]
    pub gravity_align: bool,

    /// Externally supplied camera-frame normals (.tif/.tiff/.pfm) used
    /// instead of geometric ones.
    #[arg(long, requires = "gravity_align")]
    pub normals: Option<PathBuf>,

    #[arg(long)]
    pub bin_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    KeepWithWarning,
    Reject,
}

impl From<PolicyArg> for UnknownCategoryPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::KeepWithWarning => UnknownCategoryPolicy::KeepWithWarning,
            PolicyArg::Reject => UnknownCategoryPolicy::Reject,
        }
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub eps: Option<f64>,

    #[arg(long)]
    pub min_pts: Option<usize>,

    /// Size-filter threshold t in (0, 1).
    #[arg(long)]
    pub size_threshold: Option<f64>,

    #[arg(long, value_enum)]
    pub unknown_category_policy: Option<PolicyArg>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// PLY with per-point u/v provenance.
    pub cloud: PathBuf,

    /// 2D detections JSON: [{"bbox":[umin,vmin,umax,vmax],"category","score"}].
    pub detections: PathBuf,

    /// Size priors JSON: {"<category>":[L,W,H], "_source":"..."}.
    #[arg(long)]
    pub priors: PathBuf,

    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub cloud: PathBuf,

    #[arg(long, value_enum, default_value_t = RenderMode::Single)]
    pub mode: RenderMode,

    /// Base camera JSON (e.g. written by `lift`).
    #[arg(long)]
    pub camera: Option<PathBuf>,

    /// Image size for an identity-pose camera built from the FOV.
    #[arg(long, requires = "height", conflicts_with = "camera")]
    pub width: Option<usize>,

    #[arg(long, requires = "width")]
    pub height: Option<usize>,

    #[arg(long)]
    pub fov_deg: Option<f64>,

    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_h: f64,

    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_v: f64,

    #[arg(long)]
    pub splat_px: Option<usize>,

    #[arg(long)]
    pub depth_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Detections JSON: [{"scene", "boxes":[{"center","dims","yaw","category","score"}]}].
    pub detections: PathBuf,

    /// Ground truth in the same layout.
    pub ground_truth: PathBuf,

    /// Also report volume ratios against these priors.
    #[arg(long)]
    pub priors: Option<PathBuf>,

    #[arg(long)]
    pub iou_thresh: Option<f64>,

    #[arg(long)]
    pub axis_aligned: bool,

    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Input manifest: {"inputs":[{"id","depth","detections","camera"?,"normals"?}]}.
    pub manifest: PathBuf,

    #[arg(long)]
    pub priors: PathBuf,

    /// Render stages per input (overrides renderer.pipeline_modes).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub modes: Option<Vec<RenderMode>>,

    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct PriorsCheckArgs {
    pub priors: PathBuf,
}
