//! On-disk synthetic corpora for benchmarks, examples and tests.

use std::path::{Path, PathBuf};

use serde::Serialize;

use scenelift_core::eval::{GroundTruthSet, SceneBoxes};
use scenelift_core::io::{self, PfmImage};
use scenelift_core::synth::{template_priors, RoomGenerator};
use scenelift_core::Error;

use crate::error::CliResult;

#[derive(Serialize)]
struct ManifestEntry {
    id: String,
    depth: String,
    detections: String,
}

#[derive(Serialize)]
struct Manifest {
    inputs: Vec<ManifestEntry>,
}

/// Paths of a written corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: PathBuf,
    pub ground_truth: PathBuf,
    pub priors: PathBuf,
    pub ids: Vec<String>,
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

/// Writes `rooms` generated scenes (seeds `first_seed..`) as PFM depth plus
/// 2D detections, with a pipeline manifest, aligned-frame ground truth and
/// the generator's template priors.
pub fn write_synthetic_corpus(dir: &Path, rooms: usize, first_seed: u64, generator: &RoomGenerator) -> CliResult<Corpus> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut inputs = Vec::with_capacity(rooms);
    let mut gts = Vec::with_capacity(rooms);
    let mut ids = Vec::with_capacity(rooms);
    for k in 0..rooms {
        let id = format!("room{k:03}");
        let scene = generator.generate(first_seed + k as u64)?;
        let depth = format!("{id}.pfm");
        let dets = format!("{id}.det.json");
        write(&dir.join(&depth), &io::encode_pfm(&PfmImage::from_depth(&scene.depth)))?;
        write(&dir.join(&dets), &io::to_json_bytes(&scene.boxes2d))?;
        gts.push(SceneBoxes {
            scene: id.clone(),
            boxes: scene.ground_truth_aligned()?,
        });
        inputs.push(ManifestEntry {
            id: id.clone(),
            depth,
            detections: dets,
        });
        ids.push(id);
    }
    let corpus = Corpus {
        manifest: dir.join("manifest.json"),
        ground_truth: dir.join("ground_truth.json"),
        priors: dir.join("priors.json"),
        ids,
    };
    write(&corpus.manifest, &io::to_json_bytes(&Manifest { inputs }))?;
    write(&corpus.ground_truth, &io::to_json_bytes(&GroundTruthSet::new(gts)?))?;
    write(&corpus.priors, template_priors().to_json().as_bytes())?;
    Ok(corpus)
}
