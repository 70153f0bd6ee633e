//! Domain types shared by every stage of the pipeline.
//!
//! A video is split into events, each event has a verb and up to
//! [`MAX_ROLES_PER_EVENT`] role slots. A role slot is addressed by a
//! [`RoleSlotId`] `(event, role)` where `role` is the position of the slot in
//! the event's role list. The model's attention matrix uses one row per
//! possible slot, laid out event-major.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MecError, Result};

/// Role slots available per event; also the row stride of attention matrices.
pub const MAX_ROLES_PER_EVENT: usize = 6;

/// Lowercase, collapse internal whitespace and trim.
pub fn normalize_caption(caption: &str) -> String {
    let lowered = caption.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Semantic role label. Labels outside the core set are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum RoleLabel {
    Arg0,
    Arg1,
    Arg2,
    /// Location / scene (`ArgM-Loc`, `AScn`, `Scene`, ...).
    Scene,
    Other(String),
}

impl RoleLabel {
    pub fn parse(label: &str) -> RoleLabel {
        let key: String = label
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "arg0" => RoleLabel::Arg0,
            "arg1" => RoleLabel::Arg1,
            "arg2" => RoleLabel::Arg2,
            "argmloc" | "argmlocation" | "ascn" | "scene" | "argmscene" | "location" | "loc" => {
                RoleLabel::Scene
            }
            _ => RoleLabel::Other(label.to_string()),
        }
    }

    /// Roles taking part in entity coreference.
    pub fn is_coref_eligible(&self) -> bool {
        !matches!(self, RoleLabel::Other(_))
    }

    /// Roles that were grounded with boxes (agent, patient, instrument).
    pub fn is_visual(&self) -> bool {
        matches!(self, RoleLabel::Arg0 | RoleLabel::Arg1 | RoleLabel::Arg2)
    }

    pub fn as_str(&self) -> &str {
        match self {
            RoleLabel::Arg0 => "Arg0",
            RoleLabel::Arg1 => "Arg1",
            RoleLabel::Arg2 => "Arg2",
            RoleLabel::Scene => "ArgM-Loc",
            RoleLabel::Other(s) => s,
        }
    }
}

impl From<String> for RoleLabel {
    fn from(s: String) -> Self {
        RoleLabel::parse(&s)
    }
}

impl From<RoleLabel> for String {
    fn from(l: RoleLabel) -> Self {
        l.as_str().to_string()
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Address of a role slot: `(event index, position in the event's role list)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct RoleSlotId {
    pub event: usize,
    pub role: usize,
}

impl RoleSlotId {
    pub const fn new(event: usize, role: usize) -> Self {
        RoleSlotId { event, role }
    }

    /// Row of this slot in a role-query × proposal attention matrix.
    pub const fn query_row(self) -> usize {
        self.event * MAX_ROLES_PER_EVENT + self.role
    }
}

impl From<(usize, usize)> for RoleSlotId {
    fn from((event, role): (usize, usize)) -> Self {
        RoleSlotId { event, role }
    }
}

impl From<RoleSlotId> for (usize, usize) {
    fn from(s: RoleSlotId) -> Self {
        (s.event, s.role)
    }
}

impl fmt::Display for RoleSlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.event, self.role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSlot {
    pub role_label: RoleLabel,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entity_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub gt_verbs: Vec<String>,
    pub roles: Vec<RoleSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub events: Vec<Event>,
    #[serde(default = "default_fps")]
    pub fps_sampled: f64,
}

fn default_fps() -> f64 {
    1.0
}

impl VideoAnnotation {
    /// All role slots in `(event, role)` scan order.
    pub fn slots(&self) -> impl Iterator<Item = (RoleSlotId, &RoleSlot)> {
        self.events.iter().enumerate().flat_map(|(e, ev)| {
            ev.roles
                .iter()
                .enumerate()
                .map(move |(r, slot)| (RoleSlotId::new(e, r), slot))
        })
    }

    pub fn slot(&self, id: RoleSlotId) -> Option<&RoleSlot> {
        self.events.get(id.event).and_then(|e| e.roles.get(id.role))
    }

    pub fn num_slots(&self) -> usize {
        self.events.iter().map(|e| e.roles.len()).sum()
    }
}

/// Verb sense → ordered role labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerbRoleMap(pub BTreeMap<String, Vec<RoleLabel>>);

impl VerbRoleMap {
    pub fn insert(&mut self, verb: impl Into<String>, roles: Vec<RoleLabel>) {
        self.0.insert(verb.into(), roles);
    }
}

/// Look up the role list of a verb sense.
pub fn derive_roles<'a>(verb: &str, map: &'a VerbRoleMap) -> Result<&'a [RoleLabel]> {
    map.0
        .get(verb)
        .map(Vec::as_slice)
        .ok_or_else(|| MecError::UnknownVerb(verb.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, String> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(format!("non-finite coordinate in {coords:?}"));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(format!("negative coordinate in {coords:?}"));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(format!("degenerate box {coords:?}"));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = w * h;
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(c: [f64; 4]) -> Result<Self, String> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProposal {
    pub frame_index: usize,
    pub slot_index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub tracklet_id: i64,
    pub shot_id: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub video_id: String,
    pub num_frames: usize,
    pub max_slots: usize,
    pub proposals: Vec<BoxProposal>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MecError::Index(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MecError::Index("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn scaled(&self, c: f32) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// One contextualized embedding per box proposal, in proposal order.
pub type EmbeddingMatrix = Matrix;

/// Role-query × proposal attention; row `event * MAX_ROLES_PER_EVENT + role`.
pub type AttentionMatrix = Matrix;

/// Partial assignment of entity ids to role slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionMap(BTreeMap<RoleSlotId, u32>);

impl MentionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slot: RoleSlotId, entity: u32) {
        self.0.insert(slot, entity);
    }

    pub fn get(&self, slot: RoleSlotId) -> Option<u32> {
        self.0.get(&slot).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RoleSlotId, u32)> + '_ {
        self.0.iter().map(|(&s, &e)| (s, e))
    }

    /// Renumber entity ids by first appearance in `(event, role)` order.
    pub fn normalized(&self) -> MentionMap {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut out = BTreeMap::new();
        for (&slot, &id) in &self.0 {
            let next = remap.len() as u32;
            let new_id = *remap.entry(id).or_insert(next);
            out.insert(slot, new_id);
        }
        MentionMap(out)
    }

    /// Keep only the slots accepted by `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(RoleSlotId) -> bool) -> MentionMap {
        MentionMap(
            self.0
                .iter()
                .filter(|(s, _)| keep(**s))
                .map(|(s, e)| (*s, *e))
                .collect(),
        )
    }
}

impl FromIterator<(RoleSlotId, u32)> for MentionMap {
    fn from_iter<I: IntoIterator<Item = (RoleSlotId, u32)>>(iter: I) -> Self {
        MentionMap(iter.into_iter().collect())
    }
}

/// Partition of role slots into entity groups. Group `j` corresponds to entity
/// id `j`; members are kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityGroupSet {
    pub groups: Vec<Vec<RoleSlotId>>,
}

impl EntityGroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = RoleSlotId> + '_ {
        self.groups.iter().flatten().copied()
    }

    /// Group index of every member.
    pub fn group_of(&self) -> HashMap<RoleSlotId, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(j, g)| g.iter().map(move |&s| (s, j)))
            .collect()
    }

    pub fn to_mention_map(&self) -> MentionMap {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(j, g)| g.iter().map(move |&s| (s, j as u32)))
            .collect()
    }

    /// Canonical form: groups sorted internally and ordered by their first
    /// member. Two group sets describe the same partition iff their canonical
    /// forms are equal.
    pub fn canonical(&self) -> EntityGroupSet {
        let mut groups: Vec<Vec<RoleSlotId>> = self
            .groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                let mut g = g.clone();
                g.sort();
                g
            })
            .collect();
        groups.sort();
        EntityGroupSet { groups }
    }
}

/// Group slots by entity id. Groups are numbered by first appearance, so the
/// result is independent of the absolute id values.
pub fn mention_map_to_groups(m: &MentionMap) -> EntityGroupSet {
    let normalized = m.normalized();
    let mut groups: Vec<Vec<RoleSlotId>> = Vec::new();
    for (slot, id) in normalized.iter() {
        let id = id as usize;
        if id == groups.len() {
            groups.push(Vec::new());
        }
        groups[id].push(slot);
    }
    EntityGroupSet { groups }
}

/// Partition of proposal indices into video-level entity tracks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualClusterSet {
    pub clusters: Vec<Vec<usize>>,
    pub level: usize,
}

impl VisualClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster index of each proposal, for `n` proposals.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &p in members {
                if p < n {
                    labels[p] = Some(c);
                }
            }
        }
        labels
    }
}
