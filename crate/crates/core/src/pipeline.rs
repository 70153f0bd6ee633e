//! Per-video processing: clustering, group assignment and evaluation, plus
//! corpus loading and report aggregation.
//!
//! Videos are independent jobs. Callers may run them on a rayon pool; results
//! always come back in video-id order and are combined sequentially, so the
//! output does not depend on the degree of parallelism.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{aggregate_attention, assign_clusters};
use crate::coref::{gold_groups, group_by_caption, grouping_purity};
use crate::error::{MecError, Result};
use crate::finch::{finch_hierarchy, DEFAULT_LEVELS, DEFAULT_TRACKLET_SCALE};
use crate::ingest::{
    discover_manifests, load_run_bundle, load_tensor, EvalReport, GroundingSet, MetricValue,
    RunBundle, VideoReport,
};
use crate::metrics::{
    gied, hota, iou_at_theta, lea, lea_soft, role_iou, verb_accuracy, CiderScorer, RoleBoxes,
    SoftWeighting, Track, TrackSet, DEFAULT_IOU_FLOOR,
};
use crate::model::{
    mention_map_to_groups, EmbeddingMatrix, EntityGroupSet, RoleSlotId, VisualClusterSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Verb,
    Cider,
    Lea,
    LeaSoft,
    Iou,
    Hota,
    Purity,
    Gied,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Verb,
        MetricKind::Cider,
        MetricKind::Lea,
        MetricKind::LeaSoft,
        MetricKind::Iou,
        MetricKind::Hota,
        MetricKind::Purity,
        MetricKind::Gied,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Verb => "verb",
            MetricKind::Cider => "cider",
            MetricKind::Lea => "lea",
            MetricKind::LeaSoft => "lea_soft",
            MetricKind::Iou => "iou",
            MetricKind::Hota => "hota",
            MetricKind::Purity => "grouping_purity",
            MetricKind::Gied => "gied",
        }
    }

    fn needs_grounding(self) -> bool {
        matches!(self, MetricKind::Iou | MetricKind::Hota | MetricKind::Gied)
    }
}

impl FromStr for MetricKind {
    type Err = MecError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "verb" | "verb_acc" | "acc" => MetricKind::Verb,
            "cider" => MetricKind::Cider,
            "lea" => MetricKind::Lea,
            "lea_soft" | "lea-soft" => MetricKind::LeaSoft,
            "iou" => MetricKind::Iou,
            "hota" => MetricKind::Hota,
            "grouping_purity" | "purity" => MetricKind::Purity,
            "gied" => MetricKind::Gied,
            other => return Err(MecError::Config(format!("unknown metric `{other}`"))),
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse a comma-separated metric list.
pub fn parse_metric_list(list: &str) -> Result<BTreeSet<MetricKind>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub levels: usize,
    pub tracklet_scale: f64,
    pub iou_thresholds: Vec<f64>,
    pub iou_floor: f64,
    pub metrics: BTreeSet<MetricKind>,
    pub soft_weighting: SoftWeighting,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            levels: DEFAULT_LEVELS,
            tracklet_scale: DEFAULT_TRACKLET_SCALE,
            iou_thresholds: vec![0.3, 0.5],
            iou_floor: DEFAULT_IOU_FLOOR,
            metrics: MetricKind::ALL.into_iter().collect(),
            soft_weighting: SoftWeighting::Both,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(MecError::Config("levels must be at least 1".into()));
        }
        if !(self.tracklet_scale.is_finite() && self.tracklet_scale > 0.0) {
            return Err(MecError::Config(format!(
                "tracklet scale must be positive, got {}",
                self.tracklet_scale
            )));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(MecError::Config(format!("IoU threshold {t} outside (0, 1]")));
        }
        Ok(())
    }

    fn wants(&self, m: MetricKind) -> bool {
        self.metrics.contains(&m)
    }
}

pub fn iou_key(theta: f64) -> String {
    format!("iou@{theta}")
}

// ---------------------------------------------------------------- loading

/// Load every bundle under `dir`, sorted by video id. Duplicate ids are an
/// error.
pub fn load_corpus(dir: &Path) -> Result<Vec<RunBundle>> {
    let manifests = discover_manifests(dir)?;
    let mut bundles: Vec<RunBundle> = manifests
        .par_iter()
        .map(load_run_bundle)
        .collect::<Result<_>>()?;
    bundles.sort_by(|a, b| a.video_id().cmp(b.video_id()));
    for w in bundles.windows(2) {
        if w[0].video_id() == w[1].video_id() {
            return Err(MecError::Config(format!(
                "video `{}` appears in more than one bundle",
                w[0].video_id()
            )));
        }
    }
    Ok(bundles)
}

/// Per-manifest validation results, in manifest path order.
pub fn validate_corpus(dir: &Path) -> Result<Vec<(PathBuf, Result<String>)>> {
    let manifests = discover_manifests(dir)?;
    Ok(manifests
        .par_iter()
        .map(|m| (m.clone(), load_run_bundle(m).map(|b| b.video_id().to_string())))
        .collect())
}

/// IDF corpus: one document per ground-truth role caption of every video.
pub fn corpus_scorer(bundles: &[RunBundle]) -> CiderScorer {
    CiderScorer::from_captions(
        bundles
            .iter()
            .flat_map(|b| b.annotation.slots().map(|(_, s)| s.caption.as_str()))
            .filter(|c| !c.is_empty()),
    )
}

// ---------------------------------------------------------------- clustering

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoClusters {
    pub video_id: String,
    /// Label of every proposal at each computed level.
    pub levels: Vec<Vec<usize>>,
    /// Clusters of the level used downstream (the coarsest computed).
    pub clusters: VisualClusterSet,
}

pub fn cluster_video(bundle: &RunBundle, cfg: &PipelineConfig) -> Result<VideoClusters> {
    let h = finch_hierarchy(&bundle.embeddings, &bundle.proposals, cfg.tracklet_scale, cfg.levels)?;
    let level = h.num_levels().saturating_sub(1);
    let clusters = crate::finch::clusters_from_hierarchy(&h, level);
    Ok(VideoClusters {
        video_id: bundle.video_id().to_string(),
        levels: h.levels().to_vec(),
        clusters,
    })
}

// ---------------------------------------------------------------- assignment

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAssignment {
    pub members: Vec<RoleSlotId>,
    /// `None` when the video has no proposals.
    pub cluster: Option<usize>,
    pub mass: f64,
    pub boxes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoAssignment {
    pub video_id: String,
    pub level: usize,
    pub groups: Vec<GroupAssignment>,
}

/// Predicted entity groups over every role slot of the annotation: the
/// predicted mention map, with unmapped slots as singletons.
pub fn predicted_groups(bundle: &RunBundle) -> EntityGroupSet {
    let mut groups = mention_map_to_groups(&bundle.predictions.pred_mention_map);
    let mapped: BTreeSet<RoleSlotId> = groups.members().collect();
    for (slot, _) in bundle.annotation.slots() {
        if !mapped.contains(&slot) {
            groups.groups.push(vec![slot]);
        }
    }
    groups
}

pub fn assign_video(bundle: &RunBundle, clusters: &VisualClusterSet) -> Result<VideoAssignment> {
    let groups = predicted_groups(bundle);
    let aff = aggregate_attention(&bundle.attention, &groups, clusters)?;
    let asg = assign_clusters(&aff);
    let has_clusters = !clusters.is_empty();
    let groups = groups
        .groups
        .into_iter()
        .enumerate()
        .map(|(j, members)| {
            let cluster = has_clusters.then_some(asg.cluster[j]);
            GroupAssignment {
                members,
                cluster,
                mass: asg.mass[j],
                boxes: cluster.map_or_else(Vec::new, |c| clusters.clusters[c].clone()),
            }
        })
        .collect();
    Ok(VideoAssignment {
        video_id: bundle.video_id().to_string(),
        level: clusters.level,
        groups,
    })
}

// ---------------------------------------------------------------- evaluation

fn value(v: Option<f64>) -> MetricValue {
    MetricValue::from(v)
}

/// Gold universe for coreference metrics and the partitions over it.
struct CorefPartitions {
    key: EntityGroupSet,
    response: EntityGroupSet,
    universe: Vec<RoleSlotId>,
}

fn coref_partitions(bundle: &RunBundle) -> CorefPartitions {
    let key = gold_groups(&bundle.annotation);
    let mut universe: Vec<RoleSlotId> = key.members().collect();
    universe.sort();
    let by_caption = group_by_caption(
        universe
            .iter()
            .filter_map(|&s| bundle.predictions.caption_for(s).map(|c| (s, c))),
    );
    let mut response = by_caption;
    let covered: BTreeSet<RoleSlotId> = response.members().collect();
    for &s in &universe {
        if !covered.contains(&s) {
            response.groups.push(vec![s]);
        }
    }
    CorefPartitions {
        key,
        response,
        universe,
    }
}

/// Predicted mention map restricted to the gold universe, missing slots as
/// singletons.
fn purity_groups(bundle: &RunBundle, universe: &[RoleSlotId]) -> EntityGroupSet {
    let keep: BTreeSet<RoleSlotId> = universe.iter().copied().collect();
    let restricted = bundle
        .predictions
        .pred_mention_map
        .restricted(|s| keep.contains(&s));
    let mut groups = mention_map_to_groups(&restricted);
    let covered: BTreeSet<RoleSlotId> = groups.members().collect();
    for &s in universe {
        if !covered.contains(&s) {
            groups.groups.push(vec![s]);
        }
    }
    groups
}

fn gt_tracks(grounding: &GroundingSet) -> Result<TrackSet> {
    let tracks = grounding
        .by_caption()
        .into_iter()
        .enumerate()
        .map(|(i, (_, entries))| {
            let mut boxes: Vec<_> = entries.iter().map(|e| (e.frame_index, e.bbox)).collect();
            boxes.sort_by_key(|b| b.0);
            Track {
                id: i as u64,
                boxes,
            }
        })
        .collect();
    TrackSet::new(tracks).map_err(MecError::Index)
}

fn pred_tracks(bundle: &RunBundle, asg: &VideoAssignment) -> Result<TrackSet> {
    let mut tracks = Vec::new();
    for (j, g) in asg.groups.iter().enumerate() {
        let visual = g.members.iter().any(|s| {
            bundle
                .annotation
                .slot(*s)
                .is_some_and(|slot| slot.role_label.is_visual())
        });
        if !visual || g.cluster.is_none() {
            continue;
        }
        let mut boxes: Vec<_> = g
            .boxes
            .iter()
            .map(|&b| {
                let p = &bundle.proposals.proposals[b];
                (p.frame_index, p.bbox)
            })
            .collect();
        boxes.sort_by_key(|b| b.0);
        tracks.push(Track {
            id: j as u64,
            boxes,
        });
    }
    TrackSet::new(tracks).map_err(MecError::Index)
}

/// IoU of every role that has ground-truth boxes. The predicted box is the
/// most attended box of the role's assigned cluster (ties: lowest index).
fn role_ious(bundle: &RunBundle, grounding: &GroundingSet, asg: &VideoAssignment) -> Vec<f64> {
    let mut by_caption: HashMap<&str, BTreeMap<usize, crate::model::BoundingBox>> = HashMap::new();
    for e in &grounding.entries {
        by_caption
            .entry(e.caption.as_str())
            .or_default()
            .insert(e.frame_index, e.bbox);
    }
    let group_of: HashMap<RoleSlotId, usize> = asg
        .groups
        .iter()
        .enumerate()
        .flat_map(|(j, g)| g.members.iter().map(move |&s| (s, j)))
        .collect();
    let mut out = Vec::new();
    for (slot, role) in bundle.annotation.slots() {
        let Some(gt) = by_caption.get(role.caption.as_str()) else {
            continue;
        };
        let pred = group_of.get(&slot).and_then(|&j| {
            let row = bundle.attention.row(slot.query_row());
            asg.groups[j]
                .boxes
                .iter()
                .fold(None, |best: Option<(usize, f32)>, &b| match best {
                    Some((_, v)) if v >= row[b] => best,
                    _ => Some((b, row[b])),
                })
                .map(|(b, _)| {
                    let p = &bundle.proposals.proposals[b];
                    (p.frame_index, p.bbox)
                })
        });
        let r = RoleBoxes {
            gt: gt.clone(),
            pred,
        };
        out.extend(role_iou(&r));
    }
    out
}

/// All selected metrics of one video.
pub fn evaluate_video(
    bundle: &RunBundle,
    scorer: &CiderScorer,
    cfg: &PipelineConfig,
) -> Result<VideoReport> {
    let mut report = VideoReport {
        video_id: bundle.video_id().to_string(),
        ..Default::default()
    };
    let m = &mut report.metrics;
    let ann = &bundle.annotation;

    if cfg.wants(MetricKind::Verb) {
        let gt: Vec<&Vec<String>> = ann.events.iter().map(|e| &e.gt_verbs).collect();
        let gt: Vec<Vec<&str>> = gt.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
        for k in [1, 5] {
            m.insert(
                format!("verb_acc@{k}"),
                value(verb_accuracy(&bundle.predictions.pred_verbs, &gt, k)),
            );
        }
    }

    let caption_score = |slot: RoleSlotId, reference: &str| -> f64 {
        let cand = bundle.predictions.caption_for(slot).unwrap_or("");
        scorer.score(cand, &[reference])
    };

    if cfg.wants(MetricKind::Cider) {
        let scores: Vec<f64> = ann
            .slots()
            .filter(|(_, s)| !s.caption.is_empty())
            .map(|(id, s)| caption_score(id, &s.caption))
            .collect();
        let mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        m.insert("cider".into(), value(mean));
    }

    let coref_wanted = [MetricKind::Lea, MetricKind::LeaSoft, MetricKind::Purity]
        .iter()
        .any(|k| cfg.wants(*k));
    if coref_wanted {
        let parts = coref_partitions(bundle);
        let empty = parts.universe.is_empty();
        if empty {
            log::warn!("{}: no coreference-eligible roles", bundle.video_id());
        }
        if cfg.wants(MetricKind::Lea) {
            let s = (!empty).then(|| lea(&parts.key.groups, &parts.response.groups).f1);
            m.insert("lea".into(), value(s));
        }
        if cfg.wants(MetricKind::LeaSoft) {
            let s = (!empty).then(|| {
                let weights: HashMap<RoleSlotId, f64> = parts
                    .universe
                    .iter()
                    .map(|&s| {
                        let reference = &ann.slot(s).expect("universe slot").caption;
                        (s, caption_score(s, reference) / crate::metrics::cider::SCALE)
                    })
                    .collect();
                lea_soft(&parts.key.groups, &parts.response.groups, &weights, cfg.soft_weighting).f1
            });
            m.insert("lea_soft".into(), value(s));
        }
        if cfg.wants(MetricKind::Purity) {
            if empty {
                m.insert("grouping_purity".into(), MetricValue::Unavailable);
            } else {
                let pr = grouping_purity(&purity_groups(bundle, &parts.universe), &parts.key)?;
                m.insert("grouping_purity".into(), MetricValue::Value(pr.purity));
                report.details.insert(
                    "grouping_purity".into(),
                    serde_json::to_value(&pr).expect("serializable"),
                );
            }
        }
    }

    let m = &mut report.metrics;
    let visual_wanted = cfg.wants(MetricKind::Iou) || cfg.wants(MetricKind::Hota);
    match &bundle.grounding {
        None => {
            if cfg.wants(MetricKind::Iou) {
                for &t in &cfg.iou_thresholds {
                    m.insert(iou_key(t), MetricValue::Unavailable);
                }
            }
            if cfg.wants(MetricKind::Hota) {
                for k in ["hota", "deta", "assa"] {
                    m.insert(k.into(), MetricValue::Unavailable);
                }
            }
            if cfg.wants(MetricKind::Gied) {
                m.insert("gied".into(), MetricValue::Unavailable);
            }
        }
        Some(grounding) => {
            if visual_wanted {
                let clusters = cluster_video(bundle, cfg)?.clusters;
                let asg = assign_video(bundle, &clusters)?;
                if cfg.wants(MetricKind::Iou) {
                    let ious = role_ious(bundle, grounding, &asg);
                    for &t in &cfg.iou_thresholds {
                        m.insert(iou_key(t), value(iou_at_theta(&ious, t)));
                    }
                }
                if cfg.wants(MetricKind::Hota) {
                    let score = hota(&pred_tracks(bundle, &asg)?, &gt_tracks(grounding)?);
                    m.insert("hota".into(), value(score.as_ref().map(|s| s.hota)));
                    m.insert("deta".into(), value(score.as_ref().map(|s| s.deta)));
                    m.insert("assa".into(), value(score.as_ref().map(|s| s.assa)));
                }
            }
            if cfg.wants(MetricKind::Gied) {
                let g = gied(&bundle.embeddings, &bundle.proposals, grounding, cfg.iou_floor)?;
                m.insert("gied".into(), value(g));
            }
        }
    }
    Ok(report)
}

/// Macro mean over videos of every metric, skipping unavailable entries.
pub fn aggregate(per_video: &[VideoReport]) -> BTreeMap<String, MetricValue> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for v in per_video {
        for (k, mv) in &v.metrics {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            if let MetricValue::Value(x) = mv {
                e.0 += x;
                e.1 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, value((n > 0).then(|| s / n as f64))))
        .collect()
}

pub fn evaluate(bundles: &[RunBundle], cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if bundles.iter().all(|b| b.grounding.is_none())
        && cfg.metrics.iter().any(|m| m.needs_grounding())
    {
        log::warn!("no grounding available; IoU, HOTA and GIED are reported unavailable");
    }
    let scorer = corpus_scorer(bundles);
    let per_video: Vec<VideoReport> = bundles
        .par_iter()
        .map(|b| evaluate_video(b, &scorer, cfg))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        aggregate: aggregate(&per_video),
        per_video,
    })
}

pub fn cluster_corpus(bundles: &[RunBundle], cfg: &PipelineConfig) -> Result<Vec<VideoClusters>> {
    cfg.validate()?;
    bundles.par_iter().map(|b| cluster_video(b, cfg)).collect()
}

pub fn assign_corpus(bundles: &[RunBundle], cfg: &PipelineConfig) -> Result<Vec<VideoAssignment>> {
    cfg.validate()?;
    bundles
        .par_iter()
        .map(|b| assign_video(b, &cluster_video(b, cfg)?.clusters))
        .collect()
}

// ---------------------------------------------------------------- GIED dumps

/// GIED of every video with its own embeddings.
pub fn gied_corpus(bundles: &[RunBundle], iou_floor: f64) -> Result<Vec<(String, Option<f64>)>> {
    bundles
        .par_iter()
        .map(|b| gied_with(b, &b.embeddings, iou_floor).map(|g| (b.video_id().to_string(), g)))
        .collect()
}

fn gied_with(b: &RunBundle, x: &EmbeddingMatrix, iou_floor: f64) -> Result<Option<f64>> {
    match &b.grounding {
        Some(g) => gied(x, &b.proposals, g, iou_floor),
        None => Ok(None),
    }
}

/// One GIED value per embedding dump, ordered by dump name.
///
/// Each `.bin` file or subdirectory of `dump_dir` is a dump: a tensor file
/// (usable only with a single-video corpus) or a directory holding `<video_id>.bin` per video.
/// The value of a dump is the mean over videos with a defined GIED.
pub fn gied_dumps(
    bundles: &[RunBundle],
    dump_dir: &Path,
    iou_floor: f64,
) -> Result<Vec<(String, Option<f64>)>> {
    let mut dumps: Vec<PathBuf> = std::fs::read_dir(dump_dir)
        .map_err(|e| MecError::io(dump_dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| MecError::io(dump_dir, e)))
        .collect::<Result<_>>()?;
    dumps.retain(|p| p.is_dir() || p.extension().is_some_and(|e| e == "bin"));
    dumps.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if dumps.is_empty() {
        return Err(MecError::Config(format!("no dumps in {}", dump_dir.display())));
    }
    dumps
        .iter()
        .map(|dump| {
            let name = dump
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let values: Vec<Option<f64>> = if dump.is_dir() {
                bundles
                    .par_iter()
                    .map(|b| {
                        let path = dump.join(format!("{}.bin", b.video_id()));
                        let x = load_dump(&path, b)?;
                        gied_with(b, &x, iou_floor)
                    })
                    .collect::<Result<_>>()?
            } else {
                if bundles.len() != 1 {
                    return Err(MecError::Config(format!(
                        "dump file {} needs a single-video bundle, found {} videos",
                        dump.display(),
                        bundles.len()
                    )));
                }
                vec![gied_with(&bundles[0], &load_dump(dump, &bundles[0])?, iou_floor)?]
            };
            let defined: Vec<f64> = values.into_iter().flatten().collect();
            let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            Ok((name, mean))
        })
        .collect()
}

fn load_dump(path: &Path, b: &RunBundle) -> Result<EmbeddingMatrix> {
    let t = load_tensor(path)?;
    let dims = t.dims().to_vec();
    let x = t.into_matrix().ok_or_else(|| MecError::Consistency {
        video_id: b.video_id().to_string(),
        what: format!("{} rank", path.display()),
        expected: "2".into(),
        found: dims.len().to_string(),
    })?;
    if x.rows() != b.proposals.len() {
        return Err(MecError::Consistency {
            video_id: b.video_id().to_string(),
            what: format!("{} rows", path.display()),
            expected: b.proposals.len().to_string(),
            found: x.rows().to_string(),
        });
    }
    Ok(x)
}
