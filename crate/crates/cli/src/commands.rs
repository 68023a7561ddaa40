use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scenelift_core::annotate::DroppedBox;
use scenelift_core::eval::{mean_ap, ratio_report, DetectionSet, GroundTruthSet, MeanApReport, RatioReference, RatioReport, SceneBoxes};
use scenelift_core::io;
use scenelift_core::{Box2D, Box3D, CameraModel, Error, SizePriorDB};

use crate::cli::{AnnotateArgs, EvaluateArgs, FilterArgs, LiftArgs, PipelineArgs, PriorsCheckArgs, RenderArgs};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{InputRecord, InputTiming, RunManifest, Status, Timings};
use crate::output::Staging;
use crate::stages;

fn stem(path: &Path) -> CliResult<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("cannot derive an output name from `{}`", path.display())))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

pub fn apply_filter_flags(cfg: &mut PipelineConfig, f: &FilterArgs) {
    if let Some(v) = f.eps {
        cfg.dbscan.eps = v;
    }
    if let Some(v) = f.min_pts {
        cfg.dbscan.min_pts = v;
    }
    if let Some(v) = f.size_threshold {
        cfg.size_filter.t = v;
    }
    if let Some(v) = f.unknown_category_policy {
        cfg.size_filter.unknown_category_policy = v.into();
    }
}

pub fn lift(args: &LiftArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let name = stem(&args.depth)?;
    let depth = io::read_depth(&args.depth)?;
    let camera = stages::resolve_camera(&depth, args.camera.camera.as_deref(), cfg)?;
    let lifted = stages::lift(&depth, camera, args.normals.as_deref(), args.gravity_align, cfg)?;

    let mut inputs = BTreeMap::from([("depth".to_string(), path_string(&args.depth))]);
    if let Some(c) = &args.camera.camera {
        inputs.insert("camera".into(), path_string(c));
    }
    if let Some(n) = &args.normals {
        inputs.insert("normals".into(), path_string(n));
    }
    let mut record = InputRecord::new(name.clone(), inputs);
    record.outputs = vec![format!("{name}.ply"), format!("{name}.camera.json")];
    record.lift = Some(lifted.summary);

    let mut staging = Staging::new(out)?;
    staging.write(&record.outputs[0], &io::encode_ply(&lifted.cloud))?;
    staging.write(&record.outputs[1], &io::to_json_bytes(&lifted.camera))?;
    let manifest = RunManifest::new("lift", cfg, vec![record]);
    staging.write(format!("{name}.lift-manifest.json"), &io::to_json_bytes(&manifest))?;
    staging.commit()?;
    tracing::info!(points = lifted.cloud.len(), output = %out.join(format!("{name}.ply")).display(), "lifted");
    Ok(())
}

fn read_detections_2d(path: &Path) -> CliResult<Vec<Box2D>> {
    Ok(io::read_json(path)?)
}

fn read_priors(path: &Path) -> CliResult<SizePriorDB> {
    let bytes = io::read_bytes(path)?;
    SizePriorDB::from_json(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())).into(),
        other => other.into(),
    })
}

pub fn annotate(args: &AnnotateArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let name = stem(&args.cloud)?;
    let cloud = io::read_ply(&args.cloud)?;
    let dets = read_detections_2d(&args.detections)?;
    let priors = read_priors(&args.priors)?;
    let (result, summary) = stages::annotate(&cloud, &dets, &priors, cfg)?;

    let inputs = BTreeMap::from([
        ("cloud".to_string(), path_string(&args.cloud)),
        ("detections".to_string(), path_string(&args.detections)),
        ("priors".to_string(), path_string(&args.priors)),
    ]);
    let mut record = InputRecord::new(name.clone(), inputs);
    record.outputs = vec![format!("{name}.boxes3d.json"), format!("{name}.drops.json")];
    record.annotate = Some(summary);

    let mut staging = Staging::new(out)?;
    staging.write(&record.outputs[0], &io::to_json_bytes(&result.boxes))?;
    staging.write(&record.outputs[1], &io::to_json_bytes(&result.dropped))?;
    let manifest = RunManifest::new("annotate", cfg, vec![record]);
    staging.write(format!("{name}.annotate-manifest.json"), &io::to_json_bytes(&manifest))?;
    staging.commit()?;
    tracing::info!(kept = result.boxes.len(), dropped = result.dropped.len(), "annotated");
    Ok(())
}

pub fn render(args: &RenderArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let name = stem(&args.cloud)?;
    let cloud = io::read_ply(&args.cloud)?;
    let camera = match (&args.camera, args.width, args.height) {
        (Some(p), _, _) => io::read_json::<CameraModel>(p)?,
        (None, Some(w), Some(h)) => CameraModel::from_fov(w, h, cfg.fov_deg, cfg.fov_axis)?,
        _ => return Err(CliError::Usage("render needs --camera or --width/--height".into())),
    };
    let mut staging = Staging::new(out)?;
    let summary = stages::render(&cloud, &camera, args.mode, (args.theta_h, args.theta_v), cfg, &mut staging, &name)?;
    staging.commit()?;
    tracing::info!(mode = stages::mode_name(args.mode), images = summary.images, sidecar = %summary.sidecar, "rendered");
    Ok(())
}

#[derive(Serialize)]
struct RatioSection {
    reference: &'static str,
    categories: Vec<RatioCategory>,
}

#[derive(Serialize)]
struct RatioCategory {
    category: String,
    instances: usize,
    compared: usize,
    mean_ratio: Option<f64>,
    kde_bandwidth: Option<f64>,
    kde_peak: Option<f64>,
    kde_csv: Option<String>,
}

#[derive(Serialize)]
struct EvalReport {
    tool_version: &'static str,
    config_hash: String,
    detections: String,
    ground_truth: String,
    #[serde(flatten)]
    ap: MeanApReport,
    volume_ratios: Vec<RatioSection>,
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn ratio_section(report: RatioReport, reference: &'static str, staging: &mut Staging) -> CliResult<RatioSection> {
    let mut categories = Vec::new();
    for c in report.categories {
        let kde_csv = match &c.kde {
            Some(k) => {
                let file = format!("kde/{reference}_{}.csv", file_safe(&c.category));
                staging.write(&file, k.to_csv().as_bytes())?;
                Some(file)
            }
            None => None,
        };
        let n = c.ratios.len();
        categories.push(RatioCategory {
            mean_ratio: (n > 0).then(|| c.ratios.iter().sum::<f64>() / n as f64),
            kde_bandwidth: c.kde.as_ref().map(|k| k.bandwidth),
            kde_peak: c.kde.as_ref().map(|k| k.argmax()),
            kde_csv,
            category: c.category,
            instances: c.instances,
            compared: n,
        });
    }
    Ok(RatioSection { reference, categories })
}

pub fn evaluate(args: &EvaluateArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let dets: DetectionSet = io::read_json(&args.detections)?;
    let gts: GroundTruthSet = io::read_json(&args.ground_truth)?;
    let priors = args.priors.as_deref().map(read_priors).transpose()?;
    let categories = gts.categories();
    if categories.is_empty() {
        return Err(Error::NoData("ground truth has no boxes".into()).into());
    }
    let ap = mean_ap(&dets, &gts, &categories, cfg.eval.iou_thresh, cfg.iou_mode())?;

    let mut staging = Staging::new(out)?;
    let mut volume_ratios = Vec::new();
    let has_dets = dets.scenes().iter().any(|s| !s.boxes.is_empty());
    if has_dets {
        let r = ratio_report(&dets, RatioReference::GroundTruth(&gts), cfg.eval.top_k)?;
        volume_ratios.push(ratio_section(r, "ground-truth", &mut staging)?);
        if let Some(p) = &priors {
            let r = ratio_report(&dets, RatioReference::Priors(p), cfg.eval.top_k)?;
            volume_ratios.push(ratio_section(r, "priors", &mut staging)?);
        }
    }

    let mut csv = format!(
        "# iou_thresh={} iou_mode={} interpolation={} matching={}\ncategory,ap\n",
        ap.iou_thresh,
        if cfg.eval.rotated { "rotated" } else { "axis-aligned" },
        ap.interpolation,
        ap.matching
    );
    for c in &ap.per_class {
        csv.push_str(&format!("{},{}\n", c.category, c.ap.map(|v| v.to_string()).unwrap_or_default()));
    }
    csv.push_str(&format!("mean,{}\n", ap.mean_ap));
    tracing::info!(mean_ap = ap.mean_ap, classes = ap.per_class.len(), "evaluated");

    let report = EvalReport {
        tool_version: crate::manifest::TOOL_VERSION,
        config_hash: cfg.hash(),
        detections: path_string(&args.detections),
        ground_truth: path_string(&args.ground_truth),
        ap,
        volume_ratios,
    };
    staging.write("report.json", &io::to_json_bytes(&report))?;
    staging.write("report.csv", csv.as_bytes())?;
    staging.commit()?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineInput {
    pub id: String,
    pub depth: PathBuf,
    pub detections: PathBuf,
    #[serde(default)]
    pub camera: Option<PathBuf>,
    #[serde(default)]
    pub normals: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineManifest {
    pub inputs: Vec<PipelineInput>,
}

fn check_inputs(m: &PipelineManifest) -> CliResult<()> {
    let mut seen = HashSet::new();
    for i in &m.inputs {
        let safe = !i.id.is_empty()
            && !i.id.starts_with('.')
            && i.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !safe {
            return Err(CliError::Usage(format!(
                "input id `{}` must be non-empty and use only [A-Za-z0-9._-]",
                i.id
            )));
        }
        if !seen.insert(i.id.as_str()) {
            return Err(CliError::Usage(format!("duplicate input id `{}`", i.id)));
        }
    }
    Ok(())
}

struct Processed {
    record: InputRecord,
    boxes: Option<Vec<Box3D>>,
    timing: InputTiming,
}

fn process_input(
    input: &PipelineInput,
    base: &Path,
    priors: &SizePriorDB,
    cfg: &PipelineConfig,
    out: &Path,
) -> Processed {
    let mut timing = InputTiming {
        id: input.id.clone(),
        ..Default::default()
    };
    let mut inputs = BTreeMap::from([
        ("depth".to_string(), path_string(&input.depth)),
        ("detections".to_string(), path_string(&input.detections)),
    ]);
    if let Some(c) = &input.camera {
        inputs.insert("camera".into(), path_string(c));
    }
    if let Some(n) = &input.normals {
        inputs.insert("normals".into(), path_string(n));
    }
    let mut record = InputRecord::new(input.id.clone(), inputs.clone());
    let result = run_input(input, base, priors, cfg, out, &mut record, &mut timing);
    match result {
        Ok(boxes) => Processed {
            record,
            boxes: Some(boxes),
            timing,
        },
        Err(e) => {
            tracing::error!(input = %input.id, error = %e, "input failed");
            Processed {
                record: InputRecord::failed(input.id.clone(), inputs, e.to_string()),
                boxes: None,
                timing,
            }
        }
    }
}

fn run_input(
    input: &PipelineInput,
    base: &Path,
    priors: &SizePriorDB,
    cfg: &PipelineConfig,
    out: &Path,
    record: &mut InputRecord,
    timing: &mut InputTiming,
) -> CliResult<Vec<Box3D>> {
    let mut clock = Instant::now();
    let mut lap = |timing: &mut InputTiming, stage: &str| {
        timing
            .stages_ms
            .insert(stage.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };
    let id = &input.id;
    let depth = io::read_depth(&base.join(&input.depth))?;
    let camera = stages::resolve_camera(&depth, input.camera.as_ref().map(|c| base.join(c)).as_deref(), cfg)?;
    let normals = input.normals.as_ref().map(|n| base.join(n));
    let lifted = stages::lift(&depth, camera, normals.as_deref(), true, cfg)?;
    lap(timing, "lift");

    let dets = read_detections_2d(&base.join(&input.detections))?;
    let (ann, summary) = stages::annotate(&lifted.cloud, &dets, priors, cfg)?;
    lap(timing, "annotate");

    let mut staging = Staging::new(out)?;
    let files = [
        (format!("{id}/cloud.ply"), io::encode_ply(&lifted.cloud)),
        (format!("{id}/camera.json"), io::to_json_bytes(&lifted.camera)),
        (format!("{id}/boxes3d.json"), io::to_json_bytes(&ann.boxes)),
        (format!("{id}/drops.json"), io::to_json_bytes::<Vec<DroppedBox>>(&ann.dropped)),
    ];
    for (name, bytes) in &files {
        staging.write(name, bytes)?;
        record.outputs.push(name.clone());
    }
    for &mode in &cfg.renderer.pipeline_modes {
        let r = stages::render(
            &lifted.cloud,
            &lifted.camera,
            mode,
            (0.0, 0.0),
            cfg,
            &mut staging,
            &format!("{id}/render"),
        )?;
        record.outputs.push(r.sidecar.clone());
        record.renders.push(r);
        lap(timing, &format!("render-{}", stages::mode_name(mode)));
    }
    staging.commit()?;
    record.lift = Some(lifted.summary);
    record.annotate = Some(summary);
    Ok(ann.boxes)
}

pub fn pipeline(args: &PipelineArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    let manifest: PipelineManifest = io::read_json(&args.manifest)?;
    check_inputs(&manifest)?;
    let priors = read_priors(&args.priors)?;
    let base = args.manifest.parent().unwrap_or(Path::new("")).to_path_buf();

    let processed: Vec<Processed> = manifest
        .inputs
        .par_iter()
        .map(|input| process_input(input, &base, &priors, cfg, out))
        .collect();

    let mut scenes = Vec::new();
    let mut records = Vec::new();
    let mut timings = Timings {
        command: "pipeline".into(),
        ..Default::default()
    };
    for p in processed {
        if let Some(boxes) = p.boxes {
            scenes.push(SceneBoxes {
                scene: p.record.id.clone(),
                boxes,
            });
        }
        records.push(p.record);
        timings.inputs.push(p.timing);
    }
    let run = RunManifest::new("pipeline", cfg, records);
    let failed = run.failures();
    let total = run.records.len();
    let detections = DetectionSet::new(scenes)?;

    let mut staging = Staging::new(out)?;
    staging.write("manifest.json", &io::to_json_bytes(&run))?;
    staging.write("detections.json", &io::to_json_bytes(&detections))?;
    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;
    staging.write("timings.json", &io::to_json_bytes(&timings))?;
    staging.commit()?;
    debug_assert!(run.records.iter().all(|r| (r.status == Status::Failed) == r.error.is_some()));
    tracing::info!(inputs = total, failed, "pipeline finished");
    if failed > 0 {
        return Err(CliError::Partial { failed, total });
    }
    Ok(())
}

#[derive(Serialize)]
struct PriorsSummary {
    path: String,
    source: Option<String>,
    categories: usize,
    entries: BTreeMap<String, [f64; 3]>,
}

pub fn priors_check(args: &PriorsCheckArgs) -> CliResult<String> {
    let db = read_priors(&args.priors)?;
    let summary = PriorsSummary {
        path: path_string(&args.priors),
        source: db.source().map(str::to_string),
        categories: db.len(),
        entries: db
            .categories()
            .map(|c| (c.to_string(), db.get(c).expect("listed category")))
            .collect(),
    };
    Ok(String::from_utf8(io::to_json_bytes(&summary)).expect("JSON is UTF-8"))
}
