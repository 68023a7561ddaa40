//! Run manifests: one record per input, in input order. Wall-clock timings
//! are kept in a separate document so manifests stay byte-identical across
//! reruns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use scenelift_core::annotate::{DroppedBox, KeptBox};
use scenelift_core::normals::NormalConsensus;
use scenelift_core::{CameraModel, RotationMatrix};

use crate::config::{PipelineConfig, RenderMode};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub records: Vec<InputRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig, records: Vec<InputRecord>) -> Self {
        Self {
            tool: "scenelift",
            tool_version: TOOL_VERSION,
            command: command.to_string(),
            config_hash: config.hash(),
            config: config.effective(),
            records,
        }
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status == Status::Failed).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub id: String,
    /// Input paths as given.
    pub inputs: BTreeMap<String, String>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotate: Option<AnnotateSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub renders: Vec<RenderSummary>,
    /// Output paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl InputRecord {
    pub fn new(id: impl Into<String>, inputs: BTreeMap<String, String>) -> Self {
        Self {
            id: id.into(),
            inputs,
            status: Status::Ok,
            error: None,
            lift: None,
            annotate: None,
            renders: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Failure record: stage results gathered before the error are dropped
    /// along with their (never committed) outputs.
    pub fn failed(id: impl Into<String>, inputs: BTreeMap<String, String>, error: String) -> Self {
        Self {
            status: Status::Failed,
            error: Some(error),
            ..Self::new(id, inputs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSummary {
    pub width: usize,
    pub height: usize,
    pub valid_pixels: usize,
    pub points: usize,
    pub camera: CameraModel,
    pub gravity_aligned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normals_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<RotationMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus: Option<NormalConsensus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_confidence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotateSummary {
    pub detections: usize,
    pub kept: Vec<KeptBox>,
    pub dropped: Vec<DroppedBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderSummary {
    pub mode: RenderMode,
    pub images: usize,
    pub sidecar: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub command: String,
    pub total_ms: f64,
    pub inputs: Vec<InputTiming>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InputTiming {
    pub id: String,
    pub stages_ms: BTreeMap<String, f64>,
}
