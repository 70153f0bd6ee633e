//! Run bundles: everything the evaluation needs for one video, tied together
//! by a `manifest.json`.
//!
//! ```json
//! {"video_id": "v1", "annotations": "annotations.json", "proposals": "proposals.json",
//!  "embeddings": "embeddings.bin", "attention": "attention.bin",
//!  "predictions": "predictions.json", "grounding": "grounding.json"}
//! ```
//!
//! Every key is optional and defaults to the file name shown; paths are
//! relative to the manifest. `grounding` is used only when the file exists.
//! `annotations` and `grounding` may hold several videos; the entry matching
//! the bundle's video id is selected.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json::{
    load_annotations, load_grounding, load_predictions, load_proposals, parse_json, read_file,
    GroundingSet, Limits, Predictions,
};
use super::tensor::load_tensor;
use crate::error::{MecError, Result};
use crate::model::{
    AttentionMatrix, EmbeddingMatrix, ProposalSet, RoleSlotId, VideoAnnotation,
    MAX_ROLES_PER_EVENT,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default = "d_annotations")]
    pub annotations: PathBuf,
    #[serde(default = "d_proposals")]
    pub proposals: PathBuf,
    #[serde(default = "d_embeddings")]
    pub embeddings: PathBuf,
    #[serde(default = "d_attention")]
    pub attention: PathBuf,
    #[serde(default = "d_predictions")]
    pub predictions: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<PathBuf>,
}

fn d_annotations() -> PathBuf {
    "annotations.json".into()
}
fn d_proposals() -> PathBuf {
    "proposals.json".into()
}
fn d_embeddings() -> PathBuf {
    "embeddings.bin".into()
}
fn d_attention() -> PathBuf {
    "attention.bin".into()
}
fn d_predictions() -> PathBuf {
    "predictions.json".into()
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            video_id: None,
            annotations: d_annotations(),
            proposals: d_proposals(),
            embeddings: d_embeddings(),
            attention: d_attention(),
            predictions: d_predictions(),
            grounding: Some("grounding.json".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunBundle {
    pub annotation: VideoAnnotation,
    pub proposals: ProposalSet,
    pub embeddings: EmbeddingMatrix,
    pub attention: AttentionMatrix,
    pub predictions: Predictions,
    pub grounding: Option<GroundingSet>,
}

impl RunBundle {
    pub fn video_id(&self) -> &str {
        &self.annotation.video_id
    }

    /// Check the cross-file invariants.
    pub fn validate(&self) -> Result<()> {
        let vid = self.video_id().to_string();
        let mismatch = |what: &str, expected: String, found: String| MecError::Consistency {
            video_id: vid.clone(),
            what: what.to_string(),
            expected,
            found,
        };

        for (what, other) in [
            ("proposals video_id", &self.proposals.video_id),
            ("predictions video_id", &self.predictions.video_id),
        ] {
            if *other != vid {
                return Err(mismatch(what, vid.clone(), other.clone()));
            }
        }

        let n = self.proposals.len();
        let rows = self.annotation.events.len() * MAX_ROLES_PER_EVENT;
        if self.embeddings.rows() != n {
            return Err(mismatch(
                "embeddings shape",
                format!("[{n}, d]"),
                format!("{:?}", self.embeddings.shape()),
            ));
        }
        if self.attention.shape() != (rows, n) {
            return Err(mismatch(
                "attention shape",
                format!("[{rows}, {n}]"),
                format!("{:?}", self.attention.shape()),
            ));
        }
        if let Some(i) = self.attention.as_slice().iter().position(|&v| v < 0.0) {
            return Err(MecError::schema(
                "attention.bin",
                format!("[{}, {}]", i / n.max(1), i % n.max(1)),
                &vid,
                "negative attention",
            ));
        }
        if n > 0 {
            for (slot, _) in self.annotation.slots() {
                let row = slot.query_row();
                if self.attention.row(row).iter().map(|&v| v as f64).sum::<f64>() <= 0.0 {
                    return Err(MecError::schema(
                        "attention.bin",
                        format!("row {row}"),
                        &vid,
                        format!("active role {slot} has zero attention mass"),
                    ));
                }
            }
        }

        let events = self.annotation.events.len();
        if self.predictions.pred_verbs.len() != events {
            return Err(mismatch(
                "pred_verbs length",
                events.to_string(),
                self.predictions.pred_verbs.len().to_string(),
            ));
        }
        let slots: BTreeSet<RoleSlotId> = self.annotation.slots().map(|(s, _)| s).collect();
        if let Some(slot) = super::json::unknown_prediction_slots(&self.predictions, &slots) {
            return Err(mismatch(
                "predicted role slot",
                "a slot of the annotation".into(),
                slot.to_string(),
            ));
        }

        if let Some(g) = &self.grounding {
            let captions: HashSet<&str> = self
                .annotation
                .slots()
                .map(|(_, s)| s.caption.as_str())
                .collect();
            for (i, e) in g.entries.iter().enumerate() {
                if !captions.contains(e.caption.as_str()) {
                    return Err(MecError::schema(
                        "grounding.json",
                        format!("entries[{i}].caption"),
                        &vid,
                        format!("`{}` is not a role caption of the video", e.caption),
                    ));
                }
                if e.frame_index >= self.proposals.num_frames {
                    return Err(MecError::schema(
                        "grounding.json",
                        format!("entries[{i}].frame_index"),
                        &vid,
                        format!(
                            "{} >= num_frames {}",
                            e.frame_index, self.proposals.num_frames
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    parse_json(&read_file(path)?, path)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    super::json::write_json(path, manifest)
}

pub fn load_run_bundle(manifest_path: impl AsRef<Path>) -> Result<RunBundle> {
    load_run_bundle_with(manifest_path, Limits::default())
}

pub fn load_run_bundle_with(manifest_path: impl AsRef<Path>, limits: Limits) -> Result<RunBundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let at = |p: &Path| base.join(p);

    let proposals = load_proposals(at(&manifest.proposals), limits)?;
    let vid = manifest
        .video_id
        .clone()
        .unwrap_or_else(|| proposals.video_id.clone());

    let annotation = load_annotations(at(&manifest.annotations))?
        .into_iter()
        .find(|a| a.video_id == vid)
        .ok_or_else(|| MecError::Consistency {
            video_id: vid.clone(),
            what: "annotation entry".into(),
            expected: format!("video `{vid}` in {}", manifest.annotations.display()),
            found: "none".into(),
        })?;

    let as_matrix = |file: &Path| -> Result<crate::model::Matrix> {
        let path = at(file);
        let t = load_tensor(&path)?;
        let dims = t.dims().to_vec();
        t.into_matrix().ok_or_else(|| MecError::Consistency {
            video_id: vid.clone(),
            what: format!("{} rank", file.display()),
            expected: "2".into(),
            found: format!("{} (dims {dims:?})", dims.len()),
        })
    };
    let embeddings = as_matrix(&manifest.embeddings)?;
    let attention = as_matrix(&manifest.attention)?;
    let predictions = load_predictions(at(&manifest.predictions))?;

    let grounding = match &manifest.grounding {
        Some(g) if at(g).exists() => {
            let mut sets = load_grounding(at(g))?;
            let set = sets.remove(&vid);
            if set.is_none() {
                log::warn!("{vid}: no grounding entry in {}", g.display());
            }
            set
        }
        _ => None,
    };

    let bundle = RunBundle {
        annotation,
        proposals,
        embeddings,
        attention,
        predictions,
        grounding,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Manifests under `dir`: `dir/manifest.json` itself, or one per immediate
/// subdirectory, sorted by path.
pub fn discover_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let own = dir.join(MANIFEST_FILE);
    if own.is_file() {
        return Ok(vec![own]);
    }
    let mut found = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| MecError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| MecError::io(dir, e))?;
        let candidate = entry.path().join(MANIFEST_FILE);
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(MecError::Config(format!(
            "no {MANIFEST_FILE} in {} or its subdirectories",
            dir.display()
        )));
    }
    Ok(found)
}
