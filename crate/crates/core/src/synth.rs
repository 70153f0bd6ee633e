//! Seeded synthetic bundles.
//!
//! Every entity is visible in every frame, with one proposal per entity and
//! frame forming a single tracklet. Perfect bundles predict exactly the
//! ground truth; noisy bundles add distractor proposals, split tracklets and
//! corrupt predictions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MecError, Result};
use crate::ingest::{
    write_annotations, write_grounding, write_manifest, write_predictions, write_proposals,
    write_tensor, GroundingEntry, GroundingSet, Manifest, PredCaptions, Predictions, RunBundle,
    Tensor, MANIFEST_FILE,
};
use crate::model::{
    BoundingBox, BoxProposal, Event, Matrix, MentionMap, ProposalSet, RoleLabel, RoleSlot,
    RoleSlotId, VideoAnnotation, MAX_ROLES_PER_EVENT,
};

const NOUNS: &[&str] = &[
    "man", "woman", "dog", "car", "ball", "horse", "child", "soldier", "knife", "door", "boat",
    "guitar", "chair", "phone", "girl", "boy",
];
const ADJECTIVES: &[&str] = &["tall", "old", "young", "red", "small", "dark", "blue", "bearded"];
const VERBS: &[&str] = &["throw", "run", "talk", "hold", "walk", "look", "push", "drive", "open"];
const PLACES: &[&str] = &["a park", "a street", "a kitchen", "an office", "a beach"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub video_id: String,
    pub seed: u64,
    pub events: usize,
    pub entities: usize,
    pub frames: usize,
    pub dim: usize,
    pub perfect: bool,
    pub grounding: bool,
}

impl SynthSpec {
    pub fn perfect(video_id: impl Into<String>, seed: u64) -> Self {
        SynthSpec {
            video_id: video_id.into(),
            seed,
            events: 5,
            entities: 3,
            frames: 8,
            dim: 16,
            perfect: true,
            grounding: true,
        }
    }

    pub fn noisy(video_id: impl Into<String>, seed: u64) -> Self {
        SynthSpec {
            perfect: false,
            ..SynthSpec::perfect(video_id, seed)
        }
    }
}

fn entity_box(entity: usize, frame: usize) -> BoundingBox {
    let x = 30.0 * entity as f64 + (frame % 3) as f64;
    let y = 10.0 + (frame % 2) as f64;
    BoundingBox::new(x, y, x + 20.0, y + 40.0).expect("valid box")
}

pub fn generate(spec: &SynthSpec) -> RunBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vid = spec.video_id.clone();
    let k = spec.entities.max(1);

    let mut captions: Vec<String> = Vec::new();
    while captions.len() < k {
        let c = format!(
            "the {} {}",
            ADJECTIVES.choose(&mut rng).expect("non-empty"),
            NOUNS.choose(&mut rng).expect("non-empty")
        );
        if !captions.contains(&c) {
            captions.push(c);
        }
    }
    let place = PLACES.choose(&mut rng).expect("non-empty").to_string();

    // (slot, entity) for visual roles; scene slots map to entity `k`
    let mut events = Vec::with_capacity(spec.events);
    let mut slot_entity: BTreeMap<RoleSlotId, usize> = BTreeMap::new();
    for e in 0..spec.events {
        let a0 = rng.gen_range(0..k);
        let a1 = if k > 1 { (a0 + rng.gen_range(1..k)) % k } else { a0 };
        let mut roles = Vec::new();
        for (r, (label, ent)) in [(RoleLabel::Arg0, a0), (RoleLabel::Arg1, a1), (RoleLabel::Scene, k)]
            .into_iter()
            .enumerate()
        {
            let caption = if ent == k { place.clone() } else { captions[ent].clone() };
            slot_entity.insert(RoleSlotId::new(e, r), ent);
            roles.push(RoleSlot {
                role_label: label,
                caption,
                gold_entity_id: Some(ent as u32),
            });
        }
        events.push(Event {
            index: e,
            gt_verbs: vec![VERBS.choose(&mut rng).expect("non-empty").to_string()],
            roles,
        });
    }
    let annotation = VideoAnnotation {
        video_id: vid.clone(),
        events,
        fps_sampled: 1.0,
    };

    // proposals: entity boxes first in every frame, then distractors
    let mut proposals = Vec::new();
    let mut owner: Vec<Option<usize>> = Vec::new();
    let split_at: Vec<usize> = (0..k)
        .map(|_| if spec.perfect { usize::MAX } else { rng.gen_range(1..spec.frames.max(2)) })
        .collect();
    for f in 0..spec.frames {
        let mut slot = 0;
        for ent in 0..k {
            let piece = usize::from(f >= split_at[ent]);
            proposals.push(BoxProposal {
                frame_index: f,
                slot_index: slot,
                bbox: entity_box(ent, f),
                tracklet_id: (ent * 2 + piece) as i64,
                shot_id: 0,
            });
            owner.push(Some(ent));
            slot += 1;
        }
        if !spec.perfect {
            for d in 0..rng.gen_range(0..3usize) {
                let x = 300.0 + 25.0 * d as f64 + rng.gen_range(0.0..5.0);
                proposals.push(BoxProposal {
                    frame_index: f,
                    slot_index: slot,
                    bbox: BoundingBox::new(x, 0.0, x + 15.0, 15.0).expect("valid box"),
                    tracklet_id: -1 - (f * 16 + slot) as i64,
                    shot_id: 0,
                });
                owner.push(None);
                slot += 1;
            }
        }
    }
    let n = proposals.len();

    let bases: Vec<Vec<f32>> = (0..=k)
        .map(|_| (0..spec.dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    let noise = if spec.perfect { 0.02f32 } else { 0.3 };
    let rows: Vec<Vec<f32>> = owner
        .iter()
        .map(|o| {
            let base = &bases[o.unwrap_or(k)];
            let mut v: Vec<f32> = base.iter().map(|b| b + rng.gen_range(-noise..noise)).collect();
            v[0] += 2.0;
            v
        })
        .collect();
    let embeddings = Matrix::from_rows(&rows).expect("rectangular");

    let mut attention = Matrix::zeros(spec.events * MAX_ROLES_PER_EVENT, n);
    for (&slot, &ent) in &slot_entity {
        let row = slot.query_row();
        let peak = rng.gen_range(0..spec.frames.max(1));
        for (b, p) in proposals.iter().enumerate() {
            let v = match owner[b] {
                Some(o) if o == ent => {
                    if p.frame_index == peak {
                        1.0
                    } else {
                        0.5
                    }
                }
                _ if ent == k => 0.1,
                _ => 0.01,
            };
            let jitter = if spec.perfect { 0.0 } else { rng.gen_range(0.0..0.6) };
            attention.set(row, b, v + jitter);
        }
    }

    let referenced: Vec<usize> = {
        let mut r: Vec<usize> = slot_entity.values().copied().filter(|&e| e < k).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    let grounding = spec.grounding.then(|| GroundingSet {
        video_id: vid.clone(),
        entries: referenced
            .iter()
            .flat_map(|&ent| {
                let caption = captions[ent].clone();
                (0..spec.frames).map(move |f| GroundingEntry {
                    caption: caption.clone(),
                    frame_index: f,
                    bbox: entity_box(ent, f),
                })
            })
            .collect(),
    });

    let predictions = if spec.perfect {
        Predictions {
            video_id: vid.clone(),
            pred_verbs: annotation
                .events
                .iter()
                .map(|e| {
                    let mut v = e.gt_verbs.clone();
                    v.extend(VERBS.iter().filter(|x| **x != e.gt_verbs[0]).take(4).map(|s| s.to_string()));
                    v
                })
                .collect(),
            pred_mention_map: slot_entity.iter().map(|(&s, &e)| (s, e as u32)).collect(),
            pred_captions: PredCaptions::PerRole(
                annotation
                    .slots()
                    .map(|(s, r)| (s, r.caption.clone()))
                    .collect(),
            ),
        }
    } else {
        let mut verbs: Vec<String> = VERBS.iter().map(|s| s.to_string()).collect();
        let pred_verbs = (0..spec.events)
            .map(|_| {
                verbs.shuffle(&mut rng);
                verbs[..5].to_vec()
            })
            .collect();
        let mut map = MentionMap::new();
        let mut caps = BTreeMap::new();
        for (slot, r) in annotation.slots() {
            let ent = slot_entity[&slot];
            let id = if rng.gen_bool(0.8) { ent } else { rng.gen_range(0..=k) };
            map.insert(slot, id as u32);
            let caption = if rng.gen_bool(0.7) {
                r.caption.clone()
            } else {
                format!("the {}", NOUNS.choose(&mut rng).expect("non-empty"))
            };
            caps.insert(slot, caption);
        }
        Predictions {
            video_id: vid.clone(),
            pred_verbs,
            pred_mention_map: map,
            pred_captions: PredCaptions::PerRole(caps),
        }
    };

    RunBundle {
        annotation,
        proposals: ProposalSet {
            video_id: vid,
            num_frames: spec.frames,
            max_slots: 15,
            proposals,
        },
        embeddings,
        attention,
        predictions,
        grounding,
    }
}

/// Write one bundle into `dir` (created if needed) and return the manifest
/// path.
pub fn write_bundle(dir: &Path, b: &RunBundle) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| MecError::io(dir, e))?;
    let mut manifest = Manifest {
        video_id: Some(b.video_id().to_string()),
        ..Manifest::default()
    };
    write_annotations(dir.join(&manifest.annotations), std::slice::from_ref(&b.annotation))?;
    write_proposals(dir.join(&manifest.proposals), &b.proposals)?;
    write_tensor(dir.join(&manifest.embeddings), &Tensor::from(&b.embeddings))?;
    write_tensor(dir.join(&manifest.attention), &Tensor::from(&b.attention))?;
    write_predictions(dir.join(&manifest.predictions), &b.predictions)?;
    match &b.grounding {
        Some(g) => {
            let path = manifest.grounding.clone().expect("default grounding path");
            write_grounding(dir.join(path), [g])?;
        }
        None => manifest.grounding = None,
    }
    let path = dir.join(MANIFEST_FILE);
    write_manifest(&path, &manifest)?;
    Ok(path)
}

/// Write bundles as `dir/<video_id>/`.
pub fn write_corpus(dir: &Path, bundles: &[RunBundle]) -> Result<()> {
    for b in bundles {
        write_bundle(&dir.join(b.video_id()), b)?;
    }
    Ok(())
}

/// `videos` bundles named `vid0000`, `vid0001`, ...
pub fn corpus(videos: usize, seed: u64, perfect: bool) -> Vec<RunBundle> {
    (0..videos)
        .map(|i| {
            let id = format!("vid{i:04}");
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let spec = if perfect { SynthSpec::perfect(id, s) } else { SynthSpec::noisy(id, s) };
            generate(&spec)
        })
        .collect()
}

/// Embedding dumps in which every entity's proposal embeddings move linearly
/// toward the entity centroid: step `t` of `steps` keeps a fraction
/// `1 - t/steps` of each offset. Non-entity proposals are left unchanged.
pub fn contracting_dumps(b: &RunBundle, steps: usize) -> Vec<Matrix> {
    let g = b.grounding.as_ref();
    let mut owner: Vec<Option<usize>> = vec![None; b.proposals.len()];
    if let Some(g) = g {
        for (ent, (_, entries)) in g.by_caption().into_iter().enumerate() {
            for e in entries {
                for (i, p) in b.proposals.proposals.iter().enumerate() {
                    if p.frame_index == e.frame_index && p.bbox == e.bbox {
                        owner[i] = Some(ent);
                    }
                }
            }
        }
    }
    let dim = b.embeddings.cols();
    let mut centroids: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, o) in owner.iter().enumerate() {
        if let Some(ent) = o {
            let c = centroids.entry(*ent).or_insert_with(|| (vec![0.0; dim], 0));
            for (a, &x) in c.0.iter_mut().zip(b.embeddings.row(i)) {
                *a += x as f64;
            }
            c.1 += 1;
        }
    }
    (0..steps)
        .map(|t| {
            let keep = 1.0 - t as f64 / steps as f64;
            let rows: Vec<Vec<f32>> = (0..b.proposals.len())
                .map(|i| {
                    let x = b.embeddings.row(i);
                    match owner[i] {
                        Some(ent) => {
                            let (sum, n) = &centroids[&ent];
                            x.iter()
                                .zip(sum)
                                .map(|(&v, &s)| {
                                    let c = s / *n as f64;
                                    (c + keep * (v as f64 - c)) as f32
                                })
                                .collect()
                        }
                        None => x.to_vec(),
                    }
                })
                .collect();
            Matrix::from_rows(&rows).expect("rectangular")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_bundles_validate() {
        for seed in 0..20 {
            generate(&SynthSpec::perfect("p", seed)).validate().unwrap();
            generate(&SynthSpec::noisy("n", seed)).validate().unwrap();
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&SynthSpec::noisy("v", 5));
        let b = generate(&SynthSpec::noisy("v", 5));
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate(&SynthSpec::noisy("v", 1));
        let m = write_bundle(dir.path(), &b).unwrap();
        let back = crate::ingest::load_run_bundle(m).unwrap();
        assert_eq!(back.annotation, b.annotation);
        assert_eq!(back.proposals, b.proposals);
        assert_eq!(back.attention, b.attention);
        assert_eq!(back.grounding, b.grounding);
    }
}
