//! Caption-based entity grouping and grouping-purity analysis.
//!
//! Gold entities are derived by exact matching of normalized captions: two
//! role slots refer to the same entity iff their captions are equal. Only
//! coreference-eligible roles (Arg0, Arg1, Arg2, location/scene) take part.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{MecError, Result};
use crate::model::{EntityGroupSet, RoleSlot, RoleSlotId, VideoAnnotation, VisualClusterSet};

/// Eligible slots of an annotation in `(event, role)` order.
pub fn filter_coref_roles(annotation: &VideoAnnotation) -> Vec<(RoleSlotId, &RoleSlot)> {
    annotation
        .slots()
        .filter(|(_, s)| s.role_label.is_coref_eligible())
        .collect()
}

/// Drop ineligible slots from a group set; groups left empty are removed.
pub fn filter_coref_groups(groups: &EntityGroupSet, annotation: &VideoAnnotation) -> EntityGroupSet {
    let eligible = |s: &RoleSlotId| {
        annotation
            .slot(*s)
            .is_some_and(|slot| slot.role_label.is_coref_eligible())
    };
    EntityGroupSet {
        groups: groups
            .groups
            .iter()
            .map(|g| g.iter().copied().filter(eligible).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect(),
    }
}

/// Group slots by string equality of their captions, in first-appearance
/// order. Empty captions are left out.
pub fn group_by_caption<'a>(
    captions: impl IntoIterator<Item = (RoleSlotId, &'a str)>,
) -> EntityGroupSet {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<RoleSlotId>> = Vec::new();
    for (slot, caption) in captions {
        if caption.is_empty() {
            continue;
        }
        let next = groups.len();
        let g = *index.entry(caption).or_insert(next);
        if g == groups.len() {
            groups.push(Vec::new());
        }
        groups[g].push(slot);
    }
    EntityGroupSet { groups }
}

/// Gold entity groups of a video from its (normalized) role captions.
pub fn gold_groups(annotation: &VideoAnnotation) -> EntityGroupSet {
    group_by_caption(
        filter_coref_roles(annotation)
            .into_iter()
            .map(|(id, s)| (id, s.caption.as_str())),
    )
}

/// Post-hoc grouping of caption predictions: roles with identical predicted
/// captions form one entity, and when per-role detections are given the
/// detections of a group are merged (deduplicated, ascending) into its visual
/// cluster.
pub fn posthoc_groups(
    pred_captions: &BTreeMap<RoleSlotId, String>,
    clusters_per_role: Option<&BTreeMap<RoleSlotId, Vec<usize>>>,
) -> (EntityGroupSet, Option<VisualClusterSet>) {
    let groups = group_by_caption(pred_captions.iter().map(|(s, c)| (*s, c.as_str())));
    let merged = clusters_per_role.map(|per_role| {
        let clusters = groups
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .filter_map(|s| per_role.get(s))
                    .flatten()
                    .copied()
                    .collect::<BTreeSet<usize>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        VisualClusterSet { clusters, level: 0 }
    });
    (groups, merged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPurity {
    pub group_index: usize,
    pub correct_roles: usize,
    pub wrong_roles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub purity: f64,
    pub per_group: Vec<GroupPurity>,
}

/// Slots of each predicted group split into those agreeing with the group's
/// majority gold entity and the rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PuritySplit {
    pub correct: Vec<RoleSlotId>,
    pub wrong: Vec<RoleSlotId>,
}

fn check_universe(pred: &EntityGroupSet, gold: &EntityGroupSet) -> Result<HashMap<RoleSlotId, usize>> {
    let gold_of = gold.group_of();
    let pred_slots: BTreeSet<RoleSlotId> = pred.members().collect();
    let gold_slots: BTreeSet<RoleSlotId> = gold_of.keys().copied().collect();
    if pred_slots != gold_slots {
        return Err(MecError::Domain {
            extra: pred_slots
                .difference(&gold_slots)
                .map(|&s| s.into())
                .collect(),
            missing: gold_slots
                .difference(&pred_slots)
                .map(|&s| s.into())
                .collect(),
        });
    }
    Ok(gold_of)
}

/// Majority gold entity of a group; ties go to the lowest gold id.
fn majority(group: &[RoleSlotId], gold_of: &HashMap<RoleSlotId, usize>) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in group {
        *counts.entry(gold_of[s]).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (id, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((id, c)),
        })
        .map(|(id, _)| id)
}

pub fn grouping_purity(pred: &EntityGroupSet, gold: &EntityGroupSet) -> Result<PurityReport> {
    let gold_of = check_universe(pred, gold)?;
    let mut per_group = Vec::with_capacity(pred.len());
    let (mut correct, mut total) = (0usize, 0usize);
    for (j, g) in pred.groups.iter().enumerate() {
        let good = majority(g, &gold_of).map_or(0, |m| g.iter().filter(|s| gold_of[s] == m).count());
        correct += good;
        total += g.len();
        per_group.push(GroupPurity {
            group_index: j,
            correct_roles: good,
            wrong_roles: g.len() - good,
        });
    }
    Ok(PurityReport {
        purity: if total == 0 { 1.0 } else { correct as f64 / total as f64 },
        per_group,
    })
}

pub fn purity_split(pred: &EntityGroupSet, gold: &EntityGroupSet) -> Result<PuritySplit> {
    let gold_of = check_universe(pred, gold)?;
    let mut split = PuritySplit::default();
    for g in &pred.groups {
        let m = majority(g, &gold_of);
        for &s in g {
            if Some(gold_of[&s]) == m {
                split.correct.push(s);
            } else {
                split.wrong.push(s);
            }
        }
    }
    split.correct.sort();
    split.wrong.sort();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Event, RoleLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(e: usize, r: usize) -> RoleSlotId {
        RoleSlotId::new(e, r)
    }

    fn annotation(events: Vec<Vec<(&str, &str)>>) -> VideoAnnotation {
        VideoAnnotation {
            video_id: "v".into(),
            events: events
                .into_iter()
                .enumerate()
                .map(|(index, roles)| Event {
                    index,
                    gt_verbs: vec!["verb".into()],
                    roles: roles
                        .into_iter()
                        .map(|(label, caption)| RoleSlot {
                            role_label: RoleLabel::parse(label),
                            caption: caption.into(),
                            gold_entity_id: None,
                        })
                        .collect(),
                })
                .collect(),
            fps_sampled: 1.0,
        }
    }

    #[test]
    fn gold_groups_by_caption() {
        let a = annotation(vec![vec![
            ("Arg0", "boy in blue"),
            ("Arg1", "man in suit"),
            ("Arg2", "boy in blue"),
        ]]);
        assert_eq!(
            gold_groups(&a).groups,
            vec![vec![s(0, 0), s(0, 2)], vec![s(0, 1)]]
        );
        let distinct = annotation(vec![vec![("Arg0", "a"), ("Arg1", "b")], vec![("Arg0", "c")]]);
        assert!(gold_groups(&distinct).groups.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn filter_keeps_core_roles() {
        let a = annotation(vec![vec![("Arg0", "x"), ("ArgM-Mnr", "quickly"), ("Arg1", "y")]]);
        let kept: Vec<RoleSlotId> = filter_coref_roles(&a).into_iter().map(|(id, _)| id).collect();
        assert_eq!(kept, vec![s(0, 0), s(0, 2)]);
        let none = annotation(vec![vec![("ArgM-Mnr", "x"), ("ArgM (purpose)", "y")]]);
        assert!(filter_coref_roles(&none).is_empty());
        assert!(gold_groups(&none).is_empty());

        let all = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(0, 1)], vec![s(0, 2)]],
        };
        assert_eq!(
            filter_coref_groups(&all, &a).groups,
            vec![vec![s(0, 0)], vec![s(0, 2)]]
        );
    }

    #[test]
    fn filter_matches_predicate_on_mixed_video() {
        let labels = ["Arg0", "Arg1", "Arg2", "AScn", "ArgM (manner)", "ArgM (direction)"];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let events: Vec<Vec<(&str, &str)>> = (0..5)
            .map(|_| (0..6).map(|_| (labels[rng.gen_range(0..labels.len())], "c")).collect())
            .collect();
        let a = annotation(events);
        assert_eq!(a.num_slots(), 30);
        let expected: Vec<RoleSlotId> = a
            .slots()
            .filter(|(_, slot)| {
                matches!(
                    slot.role_label,
                    RoleLabel::Arg0 | RoleLabel::Arg1 | RoleLabel::Arg2 | RoleLabel::Scene
                )
            })
            .map(|(id, _)| id)
            .collect();
        let got: Vec<RoleSlotId> = filter_coref_roles(&a).into_iter().map(|(id, _)| id).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn gold_groups_match_bucket_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pool = ["man", "woman", "dog", "red car", "old man", "kid"];
        for _ in 0..100 {
            let events: Vec<Vec<(&str, &str)>> = (0..5)
                .map(|_| {
                    (0..rng.gen_range(1..=6))
                        .map(|_| ("Arg0", pool[rng.gen_range(0..pool.len())]))
                        .collect()
                })
                .collect();
            let a = annotation(events);
            let mut buckets: BTreeMap<&str, Vec<RoleSlotId>> = BTreeMap::new();
            for (id, slot) in a.slots() {
                buckets.entry(slot.caption.as_str()).or_default().push(id);
            }
            let oracle = EntityGroupSet {
                groups: buckets.into_values().collect(),
            };
            assert_eq!(gold_groups(&a).canonical(), oracle.canonical());

            // reversing the event order relabels slots but keeps the partition
            let mut rev = a.clone();
            rev.events.reverse();
            let n = a.events.len();
            let back = EntityGroupSet {
                groups: gold_groups(&rev)
                    .groups
                    .iter()
                    .map(|g| g.iter().map(|x| s(n - 1 - x.event, x.role)).collect())
                    .collect(),
            };
            assert_eq!(back.canonical(), gold_groups(&a).canonical());

            // post-hoc grouping with oracle captions reproduces gold
            let captions: BTreeMap<RoleSlotId, String> =
                a.slots().map(|(id, sl)| (id, sl.caption.clone())).collect();
            assert_eq!(posthoc_groups(&captions, None).0.canonical(), gold_groups(&a).canonical());
        }
    }

    #[test]
    fn posthoc_merges_detections() {
        let captions = BTreeMap::from([(s(0, 0), "man".to_string()), (s(1, 0), "man".to_string())]);
        let dets = BTreeMap::from([(s(0, 0), vec![3]), (s(1, 0), vec![7])]);
        let (g, c) = posthoc_groups(&captions, Some(&dets));
        assert_eq!(g.groups, vec![vec![s(0, 0), s(1, 0)]]);
        assert_eq!(c.unwrap().clusters, vec![vec![3, 7]]);

        let distinct = BTreeMap::from([(s(0, 0), "a".to_string()), (s(1, 0), "b".to_string())]);
        let dets = BTreeMap::from([(s(0, 0), vec![3, 1]), (s(1, 0), vec![7])]);
        let (g, c) = posthoc_groups(&distinct, Some(&dets));
        assert_eq!(g.groups, vec![vec![s(0, 0)], vec![s(1, 0)]]);
        assert_eq!(c.unwrap().clusters, vec![vec![1, 3], vec![7]]);
    }

    #[test]
    fn posthoc_matches_bucket_then_union_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let slots: Vec<RoleSlotId> = (0..5).flat_map(|e| (0..3).map(move |r| s(e, r))).collect();
            let captions: BTreeMap<RoleSlotId, String> = slots
                .iter()
                .map(|&sl| (sl, ["a", "b", "c", "d"][rng.gen_range(0..4)].to_string()))
                .collect();
            let dets: BTreeMap<RoleSlotId, Vec<usize>> = slots
                .iter()
                .map(|&sl| (sl, (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..20)).collect()))
                .collect();
            let (g, c) = posthoc_groups(&captions, Some(&dets));
            let c = c.unwrap();
            let mut oracle: BTreeMap<&str, (Vec<RoleSlotId>, BTreeSet<usize>)> = BTreeMap::new();
            for (sl, cap) in &captions {
                let e = oracle.entry(cap.as_str()).or_default();
                e.0.push(*sl);
                e.1.extend(dets[sl].iter().copied());
            }
            let got: BTreeSet<(Vec<RoleSlotId>, Vec<usize>)> =
                g.groups.into_iter().zip(c.clusters).collect();
            let want: BTreeSet<(Vec<RoleSlotId>, Vec<usize>)> = oracle
                .into_values()
                .map(|(sl, d)| (sl, d.into_iter().collect()))
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn purity_examples() {
        let gold = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(1, 0), s(2, 0)], vec![s(3, 0)]],
        };
        assert_eq!(grouping_purity(&gold, &gold).unwrap().purity, 1.0);

        let pred = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(1, 0), s(2, 0), s(3, 0)]],
        };
        let r = grouping_purity(&pred, &gold).unwrap();
        assert_eq!(r.purity, 0.75);
        assert_eq!(r.per_group[0].correct_roles, 3);
        assert_eq!(r.per_group[0].wrong_roles, 1);

        let split = purity_split(&pred, &gold).unwrap();
        assert_eq!(split.wrong, vec![s(3, 0)]);

        let short = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(9, 9)]],
        };
        match grouping_purity(&short, &gold) {
            Err(MecError::Domain { extra, missing }) => {
                assert_eq!(extra, vec![(9, 9)]);
                assert_eq!(missing, vec![(1, 0), (2, 0), (3, 0)]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn purity_tie_counts_once() {
        let gold = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(0, 1)], vec![s(1, 0), s(1, 1)]],
        };
        let pred = EntityGroupSet {
            groups: vec![vec![s(0, 0), s(0, 1), s(1, 0), s(1, 1)]],
        };
        let r = grouping_purity(&pred, &gold).unwrap();
        assert_eq!(r.purity, 0.5);
        let split = purity_split(&pred, &gold).unwrap();
        assert_eq!(split.correct, vec![s(0, 0), s(0, 1)]);
    }

    fn random_partition(rng: &mut ChaCha8Rng, slots: &[RoleSlotId], k: usize) -> EntityGroupSet {
        let mut groups = vec![Vec::new(); k];
        for &sl in slots {
            groups[rng.gen_range(0..k)].push(sl);
        }
        EntityGroupSet {
            groups: groups.into_iter().filter(|g| !g.is_empty()).collect(),
        }
    }

    #[test]
    fn purity_matches_majority_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let slots: Vec<RoleSlotId> = (0..5).flat_map(|e| (0..6).map(move |r| s(e, r))).collect();
        for _ in 0..200 {
            let k = rng.gen_range(1..10);
            let gold = random_partition(&mut rng, &slots, k);
            let k = rng.gen_range(1..10);
            let pred = random_partition(&mut rng, &slots, k);
            let gold_id: HashMap<RoleSlotId, usize> = gold.group_of();
            let mut correct = 0;
            for g in &pred.groups {
                let mut best = 0;
                for cand in 0..gold.len() {
                    best = best.max(g.iter().filter(|x| gold_id[x] == cand).count());
                }
                correct += best;
            }
            let expected = correct as f64 / slots.len() as f64;
            let got = grouping_purity(&pred, &gold).unwrap().purity;
            assert!((got - expected).abs() < 1e-12);
            assert_eq!(grouping_purity(&pred, &pred).unwrap().purity, 1.0);
        }
    }

    #[test]
    fn splitting_a_correct_group_never_raises_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let slots: Vec<RoleSlotId> = (0..4).flat_map(|e| (0..5).map(move |r| s(e, r))).collect();
        for _ in 0..100 {
            let gold = random_partition(&mut rng, &slots, 4);
            let mut pred = gold.clone();
            let before = grouping_purity(&pred, &gold).unwrap().purity;
            let Some(from) = pred.groups.iter().position(|g| g.len() > 1) else { continue };
            let to = (from + 1) % pred.groups.len();
            if to == from {
                continue;
            }
            let moved = pred.groups[from].pop().unwrap();
            pred.groups[to].push(moved);
            let after = grouping_purity(&pred, &gold).unwrap().purity;
            assert!(after <= before);
        }
    }
}
