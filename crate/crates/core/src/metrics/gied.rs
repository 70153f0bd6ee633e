//! Ground-truth intra-entity distance: how far apart the embeddings of
//! proposals covering the same ground-truth entity are.

use crate::error::{MecError, Result};
use crate::ingest::GroundingSet;
use crate::model::{EmbeddingMatrix, ProposalSet};

pub const DEFAULT_IOU_FLOOR: f64 = 0.3;

/// Proposal index matched to each ground-truth box of each entity (caption).
/// A box matches the proposal of the same frame with the highest IoU above
/// `iou_floor`; ties go to the lowest proposal index.
pub fn match_entities(
    proposals: &ProposalSet,
    grounding: &GroundingSet,
    iou_floor: f64,
) -> Vec<(String, Vec<usize>)> {
    grounding
        .by_caption()
        .into_iter()
        .map(|(caption, entries)| {
            let matched = entries
                .iter()
                .filter_map(|e| {
                    let mut best: Option<(usize, f64)> = None;
                    for (i, p) in proposals.proposals.iter().enumerate() {
                        if p.frame_index != e.frame_index {
                            continue;
                        }
                        let v = p.bbox.iou(&e.bbox);
                        if v > iou_floor && best.map_or(true, |(_, b)| v > b) {
                            best = Some((i, v));
                        }
                    }
                    best.map(|(i, _)| i)
                })
                .collect();
            (caption.to_string(), matched)
        })
        .collect()
}

fn cosine_distance(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(1.0 - dot / (na.sqrt() * nb.sqrt()))
}

/// Mean over entities with at least two matches of their mean pairwise
/// cosine distance. `None` when no entity qualifies.
pub fn gied(
    embeddings: &EmbeddingMatrix,
    proposals: &ProposalSet,
    grounding: &GroundingSet,
    iou_floor: f64,
) -> Result<Option<f64>> {
    if embeddings.rows() != proposals.len() {
        return Err(MecError::Consistency {
            video_id: proposals.video_id.clone(),
            what: "embedding rows".into(),
            expected: proposals.len().to_string(),
            found: embeddings.rows().to_string(),
        });
    }
    let mut per_entity = Vec::new();
    for (_, matched) in match_entities(proposals, grounding, iou_floor) {
        if matched.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in matched.iter().enumerate() {
            for &j in &matched[a + 1..] {
                sum += cosine_distance(embeddings.row(i), embeddings.row(j))
                    .ok_or(MecError::DegenerateEmbedding { row: i.min(j) })?;
                pairs += 1;
            }
        }
        per_entity.push(sum / pairs as f64);
    }
    Ok((!per_entity.is_empty()).then(|| per_entity.iter().sum::<f64>() / per_entity.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GroundingEntry;
    use crate::model::{BoundingBox, BoxProposal, Matrix};

    fn bb(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, x + 1.0, 1.0).unwrap()
    }

    fn proposals(boxes: &[(usize, f64)]) -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            num_frames: 4,
            max_slots: 4,
            proposals: boxes
                .iter()
                .enumerate()
                .map(|(i, &(f, x))| BoxProposal {
                    frame_index: f,
                    slot_index: i,
                    bbox: bb(x),
                    tracklet_id: -1,
                    shot_id: 0,
                })
                .collect(),
        }
    }

    fn grounding(entries: &[(&str, usize, f64)]) -> GroundingSet {
        GroundingSet {
            video_id: "v".into(),
            entries: entries
                .iter()
                .map(|&(c, f, x)| GroundingEntry {
                    caption: c.into(),
                    frame_index: f,
                    bbox: bb(x),
                })
                .collect(),
        }
    }

    #[test]
    fn single_pair_distance() {
        let p = proposals(&[(0, 0.0), (1, 0.0)]);
        let g = grounding(&[("man", 0, 0.0), ("man", 1, 0.1)]);
        // cosine distance 0.4 between (1, 0) and (0.6, 0.8)
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let v = gied(&x, &p, &g, DEFAULT_IOU_FLOOR).unwrap().unwrap();
        assert!((v - 0.4).abs() < 1e-6);
        let same = Matrix::from_rows(&[vec![0.3, 0.2], vec![0.3, 0.2]]).unwrap();
        assert!(gied(&same, &p, &g, DEFAULT_IOU_FLOOR).unwrap().unwrap().abs() < 1e-7);
    }

    #[test]
    fn floor_and_closest() {
        let p = proposals(&[(0, 0.9), (0, 0.2), (0, 0.1), (1, 5.0)]);
        let g = grounding(&[("man", 0, 0.0), ("man", 1, 0.0)]);
        let m = match_entities(&p, &g, 0.3);
        assert_eq!(m, vec![("man".to_string(), vec![2])]);
        let x = Matrix::from_rows(&vec![vec![1.0, 0.0]; 4]).unwrap();
        assert_eq!(gied(&x, &p, &g, 0.3).unwrap(), None);
    }

    #[test]
    fn ties_take_lowest_index() {
        let p = proposals(&[(0, 1.5), (0, 0.5)]);
        let g = grounding(&[("a", 0, 1.0)]);
        // both IoU 1/3
        let m = match_entities(&p, &g, 0.3);
        assert_eq!(m[0].1, vec![0]);
    }

    #[test]
    fn matches_double_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let boxes: Vec<(usize, f64)> = (0..12).map(|_| (rng.gen_range(0..4), rng.gen_range(0.0..3.0))).collect();
            let p = proposals(&boxes);
            let entries: Vec<(&str, usize, f64)> = (0..4)
                .flat_map(|f| [("a", f, 0.5), ("b", f, 2.0)])
                .collect();
            let g = grounding(&entries);
            let rows: Vec<Vec<f32>> = (0..12).map(|_| (0..3).map(|_| rng.gen_range(0.1..1.0)).collect()).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let got = gied(&x, &p, &g, 0.3).unwrap();

            let mut per = Vec::new();
            for gx in [0.5, 2.0] {
                let mut hits = Vec::new();
                for f in 0..4 {
                    let target = bb(gx);
                    let mut best = None;
                    let mut bv = 0.3;
                    for (i, &(pf, px)) in boxes.iter().enumerate() {
                        let v = bb(px).iou(&target);
                        if pf == f && v > bv {
                            bv = v;
                            best = Some(i);
                        }
                    }
                    hits.extend(best);
                }
                if hits.len() >= 2 {
                    let mut s = 0.0;
                    let mut c = 0.0;
                    for i in 0..hits.len() {
                        for j in 0..hits.len() {
                            if i < j {
                                let (a, b) = (&rows[hits[i]], &rows[hits[j]]);
                                let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
                                let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                                let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                                s += 1.0 - dot / (na * nb);
                                c += 1.0;
                            }
                        }
                    }
                    per.push(s / c);
                }
            }
            let want = (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64);
            match (got, want) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6),
                (a, b) => assert_eq!(a, b),
            }
        }
    }
}
