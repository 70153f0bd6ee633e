//! JSON loaders and writers for annotations, proposals, grounding boxes and
//! model predictions. Every loader validates the invariants of the types it
//! produces and normalizes captions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{MecError, Result};
use crate::model::{
    normalize_caption, BoundingBox, BoxProposal, Event, MentionMap, ProposalSet, RoleLabel,
    RoleSlot, RoleSlotId, VideoAnnotation, MAX_ROLES_PER_EVENT,
};

/// Frame and slot caps applied to proposal sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_frames: usize,
    pub max_slots: usize,
}

impl Default for Limits {
    /// 11 frames sampled at 1 fps, 15 proposals per frame.
    fn default() -> Self {
        Limits {
            max_frames: 11,
            max_slots: 15,
        }
    }
}

impl Limits {
    pub fn unbounded() -> Self {
        Limits {
            max_frames: usize::MAX,
            max_slots: usize::MAX,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| MecError::io(path, e))
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}

/// Parse JSON, mapping syntax errors to `Parse` (with byte offset) and shape
/// errors to `Schema`.
pub(crate) fn parse_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => MecError::schema(
                path.display().to_string(),
                "<document>",
                "?",
                e.to_string(),
            ),
            _ => MecError::Parse {
                path: path.to_path_buf(),
                offset: byte_offset(bytes, e.line(), e.column()),
                message: e.to_string(),
            },
        }
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn parse_box(c: [f64; 4], file: &str, field: &str, video: &str) -> Result<BoundingBox> {
    BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|m| MecError::schema(file, field, video, m))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::Many(v) => v,
            OneOrMany::One(t) => vec![t],
        }
    }
}

// ---------------------------------------------------------------- annotations

#[derive(Deserialize)]
struct RawAnnotation {
    video_id: String,
    events: Vec<RawEvent>,
    #[serde(default)]
    fps_sampled: Option<f64>,
}

#[derive(Deserialize)]
struct RawEvent {
    index: i64,
    gt_verbs: Vec<String>,
    roles: Vec<RawRole>,
}

#[derive(Deserialize)]
struct RawRole {
    role_label: String,
    caption: String,
    #[serde(default)]
    gold_entity_id: Option<i64>,
}

fn validate_annotation(raw: RawAnnotation, file: &str) -> Result<VideoAnnotation> {
    let vid = raw.video_id.clone();
    let err = |field: String, msg: String| MecError::schema(file, field, &vid, msg);

    if raw.video_id.is_empty() {
        return Err(err("video_id".into(), "empty video id".into()));
    }
    let fps = raw.fps_sampled.unwrap_or(1.0);
    if !fps.is_finite() || fps <= 0.0 {
        return Err(err("fps_sampled".into(), format!("must be positive, got {fps}")));
    }

    let mut events: Vec<(usize, Event)> = Vec::with_capacity(raw.events.len());
    for (pos, ev) in raw.events.into_iter().enumerate() {
        let field = format!("events[{pos}]");
        if ev.index < 0 {
            return Err(err(format!("{field}.index"), "negative event index".into()));
        }
        if ev.roles.len() > MAX_ROLES_PER_EVENT {
            return Err(err(
                format!("{field}.roles"),
                format!("{} roles exceeds {MAX_ROLES_PER_EVENT}", ev.roles.len()),
            ));
        }
        let mut verbs: Vec<String> = Vec::with_capacity(ev.gt_verbs.len());
        for v in ev.gt_verbs {
            if !verbs.contains(&v) {
                verbs.push(v);
            }
        }
        let mut roles = Vec::with_capacity(ev.roles.len());
        for (r, role) in ev.roles.into_iter().enumerate() {
            let caption = normalize_caption(&role.caption);
            if caption.is_empty() {
                return Err(err(format!("{field}.roles[{r}].caption"), "empty caption".into()));
            }
            let gold_entity_id = match role.gold_entity_id {
                None => None,
                Some(id) if (0..=u32::MAX as i64).contains(&id) => Some(id as u32),
                Some(id) => {
                    return Err(err(
                        format!("{field}.roles[{r}].gold_entity_id"),
                        format!("invalid entity id {id}"),
                    ))
                }
            };
            roles.push(RoleSlot {
                role_label: RoleLabel::parse(&role.role_label),
                caption,
                gold_entity_id,
            });
        }
        events.push((
            ev.index as usize,
            Event {
                index: ev.index as usize,
                gt_verbs: verbs,
                roles,
            },
        ));
    }
    events.sort_by_key(|(i, _)| *i);
    for (expected, (index, _)) in events.iter().enumerate() {
        if *index != expected {
            return Err(err(
                "events.index".into(),
                format!("event indices must be contiguous from 0; expected {expected}, found {index}"),
            ));
        }
    }
    Ok(VideoAnnotation {
        video_id: raw.video_id,
        events: events.into_iter().map(|(_, e)| e).collect(),
        fps_sampled: fps,
    })
}

pub fn parse_annotations(bytes: &[u8], path: &Path) -> Result<Vec<VideoAnnotation>> {
    let raw: Vec<RawAnnotation> = parse_json(bytes, path)?;
    let file = file_label(path);
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|a| {
            if !seen.insert(a.video_id.clone()) {
                return Err(MecError::schema(
                    &file,
                    "video_id",
                    &a.video_id,
                    "duplicate video",
                ));
            }
            validate_annotation(a, &file)
        })
        .collect()
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<VideoAnnotation>> {
    let path = path.as_ref();
    parse_annotations(&read_file(path)?, path)
}

pub fn write_annotations(path: impl AsRef<Path>, annotations: &[VideoAnnotation]) -> Result<()> {
    write_json(path.as_ref(), &annotations)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| MecError::io(path, e))
}

// ------------------------------------------------------------------ proposals

#[derive(Deserialize)]
struct RawProposalSet {
    video_id: String,
    num_frames: usize,
    max_slots: usize,
    proposals: Vec<RawProposal>,
}

#[derive(Deserialize)]
struct RawProposal {
    frame_index: usize,
    slot_index: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    tracklet_id: i64,
    shot_id: i64,
}

pub fn parse_proposals(bytes: &[u8], path: &Path, limits: Limits) -> Result<ProposalSet> {
    let raw: RawProposalSet = parse_json(bytes, path)?;
    let file = file_label(path);
    let vid = raw.video_id.clone();
    let err = |field: String, msg: String| MecError::schema(&file, field, &vid, msg);

    if raw.num_frames > limits.max_frames {
        return Err(err(
            "num_frames".into(),
            format!("{} exceeds limit {}", raw.num_frames, limits.max_frames),
        ));
    }
    if raw.max_slots > limits.max_slots {
        return Err(err(
            "max_slots".into(),
            format!("{} exceeds limit {}", raw.max_slots, limits.max_slots),
        ));
    }
    let mut occupied = HashSet::new();
    let mut tracklet_shot: HashMap<i64, i64> = HashMap::new();
    let mut proposals = Vec::with_capacity(raw.proposals.len());
    for (i, p) in raw.proposals.into_iter().enumerate() {
        let field = format!("proposals[{i}]");
        if p.frame_index >= raw.num_frames {
            return Err(err(
                format!("{field}.frame_index"),
                format!("{} >= num_frames {}", p.frame_index, raw.num_frames),
            ));
        }
        if p.slot_index >= raw.max_slots {
            return Err(err(
                format!("{field}.slot_index"),
                format!("{} >= max_slots {}", p.slot_index, raw.max_slots),
            ));
        }
        if !occupied.insert((p.frame_index, p.slot_index)) {
            return Err(err(
                field,
                format!("duplicate (frame, slot) = ({}, {})", p.frame_index, p.slot_index),
            ));
        }
        if let Some(&shot) = tracklet_shot.get(&p.tracklet_id) {
            if shot != p.shot_id {
                return Err(err(
                    format!("{field}.shot_id"),
                    format!(
                        "tracklet {} spans shots {shot} and {}",
                        p.tracklet_id, p.shot_id
                    ),
                ));
            }
        } else {
            tracklet_shot.insert(p.tracklet_id, p.shot_id);
        }
        let bbox = parse_box(p.bbox, &file, &format!("{field}.box"), &vid)?;
        proposals.push(BoxProposal {
            frame_index: p.frame_index,
            slot_index: p.slot_index,
            bbox,
            tracklet_id: p.tracklet_id,
            shot_id: p.shot_id,
        });
    }
    Ok(ProposalSet {
        video_id: raw.video_id,
        num_frames: raw.num_frames,
        max_slots: raw.max_slots,
        proposals,
    })
}

pub fn load_proposals(path: impl AsRef<Path>, limits: Limits) -> Result<ProposalSet> {
    let path = path.as_ref();
    parse_proposals(&read_file(path)?, path, limits)
}

pub fn write_proposals(path: impl AsRef<Path>, proposals: &ProposalSet) -> Result<()> {
    write_json(path.as_ref(), proposals)
}

// ------------------------------------------------------------------ grounding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingEntry {
    pub caption: String,
    pub frame_index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Ground-truth boxes of one video: one entry per (entity, frame) where the
/// entity is visible. Entities are identified by their caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSet {
    pub video_id: String,
    pub entries: Vec<GroundingEntry>,
}

impl GroundingSet {
    /// Entries grouped by caption, in first-appearance order of captions.
    pub fn by_caption(&self) -> Vec<(&str, Vec<&GroundingEntry>)> {
        let mut order: Vec<(&str, Vec<&GroundingEntry>)> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for e in &self.entries {
            let i = *index.entry(e.caption.as_str()).or_insert_with(|| {
                order.push((e.caption.as_str(), Vec::new()));
                order.len() - 1
            });
            order[i].1.push(e);
        }
        order
    }

    pub fn unique_captions(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.caption.as_str())
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Deserialize)]
struct RawGroundingSet {
    video_id: String,
    entries: Vec<RawGroundingEntry>,
}

#[derive(Deserialize)]
struct RawGroundingEntry {
    caption: String,
    frame_index: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

pub fn parse_grounding(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, GroundingSet>> {
    let raw: OneOrMany<RawGroundingSet> = parse_json(bytes, path)?;
    let file = file_label(path);
    let mut out = BTreeMap::new();
    for set in raw.into_vec() {
        let vid = set.video_id;
        let mut entries = Vec::with_capacity(set.entries.len());
        let mut seen = HashSet::new();
        for (i, e) in set.entries.into_iter().enumerate() {
            let field = format!("entries[{i}]");
            let caption = normalize_caption(&e.caption);
            if caption.is_empty() {
                return Err(MecError::schema(&file, format!("{field}.caption"), &vid, "empty caption"));
            }
            if !seen.insert((caption.clone(), e.frame_index)) {
                return Err(MecError::schema(
                    &file,
                    &field,
                    &vid,
                    format!("second box for `{caption}` in frame {}", e.frame_index),
                ));
            }
            let bbox = parse_box(e.bbox, &file, &format!("{field}.box"), &vid)?;
            entries.push(GroundingEntry {
                caption,
                frame_index: e.frame_index,
                bbox,
            });
        }
        if out.contains_key(&vid) {
            return Err(MecError::schema(&file, "video_id", &vid, "duplicate video"));
        }
        out.insert(
            vid.clone(),
            GroundingSet {
                video_id: vid,
                entries,
            },
        );
    }
    Ok(out)
}

pub fn load_grounding(path: impl AsRef<Path>) -> Result<BTreeMap<String, GroundingSet>> {
    let path = path.as_ref();
    parse_grounding(&read_file(path)?, path)
}

pub fn write_grounding<'a>(
    path: impl AsRef<Path>,
    sets: impl IntoIterator<Item = &'a GroundingSet>,
) -> Result<()> {
    let sets: Vec<&GroundingSet> = sets.into_iter().collect();
    write_json(path.as_ref(), &sets)
}

/// Dataset-level counts over a collection of grounding sets. Unique captions
/// are counted per video (one caption is one entity of one video).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingStats {
    pub videos: usize,
    pub boxes: usize,
    pub unique_captions: usize,
    pub boxes_per_caption: f64,
    pub boxes_per_video: f64,
}

impl GroundingStats {
    pub fn compute<'a>(sets: impl IntoIterator<Item = &'a GroundingSet>) -> Self {
        let (mut videos, mut boxes, mut captions) = (0, 0, 0);
        for s in sets {
            videos += 1;
            boxes += s.entries.len();
            captions += s.unique_captions();
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        GroundingStats {
            videos,
            boxes,
            unique_captions: captions,
            boxes_per_caption: ratio(boxes, captions),
            boxes_per_video: ratio(boxes, videos),
        }
    }
}

// ---------------------------------------------------------------- predictions

/// Predicted captions, either one per role slot or one per predicted entity.
#[derive(Debug, Clone, PartialEq)]
pub enum PredCaptions {
    PerRole(BTreeMap<RoleSlotId, String>),
    PerEntity(BTreeMap<u32, String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub video_id: String,
    /// Ranked verb senses per event.
    pub pred_verbs: Vec<Vec<String>>,
    pub pred_mention_map: MentionMap,
    pub pred_captions: PredCaptions,
}

impl Predictions {
    /// Normalized predicted caption of a slot, if any.
    pub fn caption_for(&self, slot: RoleSlotId) -> Option<&str> {
        match &self.pred_captions {
            PredCaptions::PerRole(m) => m.get(&slot).map(String::as_str),
            PredCaptions::PerEntity(m) => self
                .pred_mention_map
                .get(slot)
                .and_then(|id| m.get(&id))
                .map(String::as_str),
        }
    }
}

#[derive(Deserialize)]
struct RawPredictions {
    video_id: String,
    pred_verbs: Vec<Vec<String>>,
    pred_mention_map: Vec<RawMention>,
    pred_captions: Vec<RawPredCaption>,
}

#[derive(Serialize, Deserialize)]
struct RawMention {
    event: usize,
    role: usize,
    entity_id: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawPredCaption {
    Role {
        event: usize,
        role: usize,
        caption: String,
    },
    Entity {
        entity_id: i64,
        caption: String,
    },
}

pub fn parse_predictions(bytes: &[u8], path: &Path) -> Result<Predictions> {
    let raw: RawPredictions = parse_json(bytes, path)?;
    let file = file_label(path);
    let vid = raw.video_id.clone();
    let err = |field: String, msg: String| MecError::schema(&file, field, &vid, msg);

    let mut map = MentionMap::new();
    let mut seen = HashSet::new();
    for (i, m) in raw.pred_mention_map.iter().enumerate() {
        let slot = RoleSlotId::new(m.event, m.role);
        if !(0..=u32::MAX as i64).contains(&m.entity_id) {
            return Err(err(
                format!("pred_mention_map[{i}].entity_id"),
                format!("invalid entity id {}", m.entity_id),
            ));
        }
        if !seen.insert(slot) {
            return Err(err(format!("pred_mention_map[{i}]"), format!("duplicate slot {slot}")));
        }
        map.insert(slot, m.entity_id as u32);
    }

    let mut per_role = BTreeMap::new();
    let mut per_entity = BTreeMap::new();
    for (i, c) in raw.pred_captions.into_iter().enumerate() {
        let field = format!("pred_captions[{i}]");
        match c {
            RawPredCaption::Role {
                event,
                role,
                caption,
            } => {
                let slot = RoleSlotId::new(event, role);
                if per_role.insert(slot, normalize_caption(&caption)).is_some() {
                    return Err(err(field, format!("duplicate caption for slot {slot}")));
                }
            }
            RawPredCaption::Entity { entity_id, caption } => {
                if !(0..=u32::MAX as i64).contains(&entity_id) {
                    return Err(err(field, format!("invalid entity id {entity_id}")));
                }
                if per_entity
                    .insert(entity_id as u32, normalize_caption(&caption))
                    .is_some()
                {
                    return Err(err(field, format!("duplicate caption for entity {entity_id}")));
                }
            }
        }
    }
    let pred_captions = match (per_role.is_empty(), per_entity.is_empty()) {
        (_, true) => PredCaptions::PerRole(per_role),
        (true, false) => PredCaptions::PerEntity(per_entity),
        (false, false) => {
            return Err(err(
                "pred_captions".into(),
                "mixes per-role and per-entity captions".into(),
            ))
        }
    };
    Ok(Predictions {
        video_id: raw.video_id,
        pred_verbs: raw.pred_verbs,
        pred_mention_map: map,
        pred_captions,
    })
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    parse_predictions(&read_file(path)?, path)
}

pub fn write_predictions(path: impl AsRef<Path>, p: &Predictions) -> Result<()> {
    let mentions: Vec<RawMention> = p
        .pred_mention_map
        .iter()
        .map(|(s, e)| RawMention {
            event: s.event,
            role: s.role,
            entity_id: e as i64,
        })
        .collect();
    let captions: Vec<RawPredCaption> = match &p.pred_captions {
        PredCaptions::PerRole(m) => m
            .iter()
            .map(|(s, c)| RawPredCaption::Role {
                event: s.event,
                role: s.role,
                caption: c.clone(),
            })
            .collect(),
        PredCaptions::PerEntity(m) => m
            .iter()
            .map(|(e, c)| RawPredCaption::Entity {
                entity_id: *e as i64,
                caption: c.clone(),
            })
            .collect(),
    };
    let value = serde_json::json!({
        "video_id": p.video_id,
        "pred_verbs": p.pred_verbs,
        "pred_mention_map": mentions,
        "pred_captions": captions,
    });
    write_json(path.as_ref(), &value)
}

/// Slots referenced by the predictions that do not exist in `slots`.
pub(crate) fn unknown_prediction_slots(
    p: &Predictions,
    slots: &BTreeSet<RoleSlotId>,
) -> Option<RoleSlotId> {
    let mentioned = p.pred_mention_map.iter().map(|(s, _)| s);
    let captioned: Vec<RoleSlotId> = match &p.pred_captions {
        PredCaptions::PerRole(m) => m.keys().copied().collect(),
        PredCaptions::PerEntity(_) => Vec::new(),
    };
    mentioned.chain(captioned).find(|s| !slots.contains(s))
}
