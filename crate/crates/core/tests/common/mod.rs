//! Brute-force oracles and random instance generators shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use mec_core::finch::DistanceMatrix;
use mec_core::metrics::{alphas, Track, TrackSet};
use mec_core::model::{
    BoundingBox, BoxProposal, EntityGroupSet, Matrix, ProposalSet, RoleSlotId, VisualClusterSet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------------------ FINCH

/// Partition as a set of member sets.
pub fn as_sets(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut m: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().insert(i);
    }
    m.into_values().collect()
}

/// Components of the graph linking every point to its nearest finite
/// neighbor (lowest index on ties), by repeated flooding.
pub fn nn_components(d: &DistanceMatrix) -> BTreeSet<BTreeSet<usize>> {
    let n = d.len();
    let mut adj = vec![BTreeSet::new(); n];
    for i in 0..n {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if j == i || !d.get(i, j).is_finite() {
                continue;
            }
            if best.map_or(true, |b| d.get(i, j) < d.get(i, b)) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            comp.insert(v);
            stack.extend(adj[v].iter().copied());
        }
        out.insert(comp);
    }
    out
}

pub fn random_distances(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    // small integer grid produces ties; some pairs are forbidden
    DistanceMatrix::from_fn(n, |_, _| {
        if rng.gen_bool(0.15) {
            f64::INFINITY
        } else {
            rng.gen_range(1..8) as f64 / 4.0
        }
    })
}

/// Random video: shots of consecutive frames, tracklets that live inside one
/// shot with at most one box per frame, random embeddings.
pub fn random_video(rng: &mut ChaCha8Rng, max_frames: usize, max_slots: usize, dim: usize) -> (ProposalSet, Matrix) {
    let frames = rng.gen_range(1..=max_frames);
    let mut shot_of = Vec::with_capacity(frames);
    let mut shot = 0i64;
    for f in 0..frames {
        if f > 0 && rng.gen_bool(0.25) {
            shot += 1;
        }
        shot_of.push(shot);
    }
    let mut proposals = Vec::new();
    let mut next_tracklet = 0i64;
    // open tracklets of the current shot
    let mut open: Vec<i64> = Vec::new();
    for f in 0..frames {
        if f > 0 && shot_of[f] != shot_of[f - 1] {
            open.clear();
        }
        let slots = rng.gen_range(1..=max_slots);
        let mut continuing: Vec<i64> = open.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
        continuing.truncate(slots);
        let mut used = Vec::new();
        for l in 0..slots {
            let tracklet = if l < continuing.len() {
                continuing[l]
            } else {
                next_tracklet += 1;
                next_tracklet
            };
            used.push(tracklet);
            let x = rng.gen_range(0.0..100.0);
            let y = rng.gen_range(0.0..100.0);
            proposals.push(BoxProposal {
                frame_index: f,
                slot_index: l,
                bbox: BoundingBox::new(x, y, x + 10.0, y + 10.0).unwrap(),
                tracklet_id: tracklet,
                shot_id: shot_of[f],
            });
        }
        open = used;
    }
    let rows: Vec<Vec<f32>> = (0..proposals.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    let set = ProposalSet {
        video_id: "rand".into(),
        num_frames: frames,
        max_slots,
        proposals,
    };
    (set, Matrix::from_rows(&rows).unwrap())
}

// ------------------------------------------------------------------ Hungarian

/// Minimum total cost over all injective assignments of the smaller side.
pub fn brute_min_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transposed;
    let c = if rows <= cols {
        cost
    } else {
        transposed = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect::<Vec<Vec<f64>>>();
        &transposed[..]
    };
    fn rec(c: &[Vec<f64>], r: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if r == c.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                rec(c, r + 1, used, acc + c[r][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(c, 0, &mut vec![false; c[0].len()], 0.0, &mut best);
    best
}

// ------------------------------------------------------------------ HOTA

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
}

/// HOTA from the definition: alignment accumulated per frame, exhaustive
/// best-score matching per frame, then TPA/FNA/FPA counted for every true
/// positive.
pub fn brute_hota(pred: &TrackSet, gt: &TrackSet) -> Vec<AlphaScores> {
    let g = gt.tracks();
    let p = pred.tracks();
    let at = |t: &Track, f: usize| t.boxes.iter().find(|b| b.0 == f).map(|b| b.1);
    let frames: BTreeSet<usize> = g.iter().chain(p).flat_map(|t| t.boxes.iter().map(|b| b.0)).collect();

    let mut potential = vec![vec![0.0; p.len()]; g.len()];
    for &f in &frames {
        let gs: Vec<(usize, BoundingBox)> = g.iter().enumerate().filter_map(|(i, t)| at(t, f).map(|b| (i, b))).collect();
        let ps: Vec<(usize, BoundingBox)> = p.iter().enumerate().filter_map(|(i, t)| at(t, f).map(|b| (i, b))).collect();
        for &(gi, gb) in &gs {
            for &(pi, pb) in &ps {
                let s = gb.iou(&pb);
                let row: f64 = ps.iter().map(|(_, b)| gb.iou(b)).sum();
                let col: f64 = gs.iter().map(|(_, b)| b.iou(&pb)).sum();
                let denom = row + col - s;
                if denom > 1e-10 {
                    potential[gi][pi] += s / denom;
                }
            }
        }
    }
    let align = |gi: usize, pi: usize| {
        let d = g[gi].boxes.len() as f64 + p[pi].boxes.len() as f64 - potential[gi][pi];
        if d > 1e-10 {
            potential[gi][pi] / d
        } else {
            0.0
        }
    };

    // best matching per frame: (gt track, pred track, iou)
    let mut frame_matches: Vec<(Vec<(usize, usize, f64)>, usize, usize)> = Vec::new();
    for &f in &frames {
        let gs: Vec<(usize, BoundingBox)> = g.iter().enumerate().filter_map(|(i, t)| at(t, f).map(|b| (i, b))).collect();
        let ps: Vec<(usize, BoundingBox)> = p.iter().enumerate().filter_map(|(i, t)| at(t, f).map(|b| (i, b))).collect();
        let mut best: (f64, Vec<(usize, usize)>) = (0.0, Vec::new());
        fn rec(
            a: usize,
            score: &dyn Fn(usize, usize) -> f64,
            na: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            acc: f64,
            best: &mut (f64, Vec<(usize, usize)>),
        ) {
            if a == na {
                if acc > best.0 + 1e-12 {
                    *best = (acc, cur.clone());
                }
                return;
            }
            rec(a + 1, score, na, used, cur, acc, best);
            for b in 0..used.len() {
                let s = score(a, b);
                if !used[b] && s > 0.0 {
                    used[b] = true;
                    cur.push((a, b));
                    rec(a + 1, score, na, used, cur, acc + s, best);
                    cur.pop();
                    used[b] = false;
                }
            }
        }
        let score = |a: usize, b: usize| align(gs[a].0, ps[b].0) * gs[a].1.iou(&ps[b].1);
        rec(0, &score, gs.len(), &mut vec![false; ps.len()], &mut Vec::new(), 0.0, &mut best);
        let matched = best
            .1
            .iter()
            .map(|&(a, b)| (gs[a].0, ps[b].0, gs[a].1.iou(&ps[b].1)))
            .collect();
        frame_matches.push((matched, gs.len(), ps.len()));
    }

    alphas()
        .into_iter()
        .map(|alpha| {
            let (mut tp, mut fn_, mut fp) = (0usize, 0usize, 0usize);
            let mut tps: Vec<(usize, usize)> = Vec::new();
            for (m, ng, np) in &frame_matches {
                let hits: Vec<(usize, usize)> = m
                    .iter()
                    .filter(|(_, _, s)| *s >= alpha - 1e-10 && *s > 0.0)
                    .map(|&(a, b, _)| (a, b))
                    .collect();
                tp += hits.len();
                fn_ += ng - hits.len();
                fp += np - hits.len();
                tps.extend(hits);
            }
            let mut ass = 0.0;
            for &(a, b) in &tps {
                let tpa = tps.iter().filter(|&&x| x == (a, b)).count() as f64;
                let fna = g[a].boxes.len() as f64 - tpa;
                let fpa = p[b].boxes.len() as f64 - tpa;
                ass += tpa / (tpa + fna + fpa);
            }
            let assa = if tp == 0 { 0.0 } else { ass / tp as f64 };
            let denom = (tp + fn_ + fp) as f64;
            let deta = if denom == 0.0 { 0.0 } else { tp as f64 / denom };
            AlphaScores {
                hota: (deta * assa).sqrt(),
                deta,
                assa,
            }
        })
        .collect()
}

/// Up to `max_tracks` tracks over up to `max_frames` frames. Boxes are packed
/// into a small area so overlaps are common, with continuous coordinates so
/// that optimal matchings are unique.
pub fn random_tracks(rng: &mut ChaCha8Rng, max_tracks: usize, max_frames: usize) -> TrackSet {
    let n = rng.gen_range(0..=max_tracks);
    let tracks = (0..n)
        .map(|id| {
            let mut boxes = Vec::new();
            for f in 0..max_frames {
                if rng.gen_bool(0.7) {
                    let x = rng.gen_range(0.0..3.0);
                    let y = rng.gen_range(0.0..1.5);
                    let w = rng.gen_range(0.5..2.0);
                    boxes.push((f, BoundingBox::new(x, y, x + w, y + w).unwrap()));
                }
            }
            Track { id: id as u64, boxes }
        })
        .collect();
    TrackSet::new(tracks).unwrap()
}

// ------------------------------------------------------------------ LEA

/// LEA recall by enumerating every mention pair.
pub fn brute_lea_recall(key: &[Vec<u32>], response: &[Vec<u32>]) -> f64 {
    let resp_of: HashMap<u32, usize> = response
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.iter().map(move |&m| (m, i)))
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in key.iter().filter(|k| !k.is_empty()) {
        den += k.len() as f64;
        if k.len() == 1 {
            let hit = resp_of.get(&k[0]).is_some_and(|&r| response[r].len() == 1);
            num += if hit { 1.0 } else { 0.0 };
            continue;
        }
        let (mut total, mut kept) = (0usize, 0usize);
        for a in 0..k.len() {
            for b in 0..k.len() {
                if a < b {
                    total += 1;
                    if let (Some(x), Some(y)) = (resp_of.get(&k[a]), resp_of.get(&k[b])) {
                        if x == y {
                            kept += 1;
                        }
                    }
                }
            }
        }
        num += k.len() as f64 * kept as f64 / total as f64;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn random_partition_of(rng: &mut ChaCha8Rng, mentions: &[u32]) -> Vec<Vec<u32>> {
    let k = rng.gen_range(1..=mentions.len().max(1));
    let mut parts = vec![Vec::new(); k];
    for &m in mentions {
        parts[rng.gen_range(0..k)].push(m);
    }
    parts.retain(|p| !p.is_empty());
    parts
}

// ------------------------------------------------------------------ CIDEr

fn naive_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned.split_whitespace().map(String::from).collect()
}

fn naive_ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].join(" ")).collect()
}

/// CIDEr-D of one candidate/reference pair from first principles.
pub fn naive_cider(candidate: &str, reference: &str, corpus: &[&str]) -> f64 {
    let (ct, rt) = (naive_tokens(candidate), naive_tokens(reference));
    if ct.is_empty() {
        return 0.0;
    }
    let docs = corpus.len() as f64;
    let mut total = 0.0;
    let mut orders = 0;
    for n in 1..=4 {
        let cg = naive_ngrams(&ct, n);
        let rg = naive_ngrams(&rt, n);
        if cg.is_empty() && rg.is_empty() {
            continue;
        }
        orders += 1;
        let idf = |g: &String| {
            let df = corpus.iter().filter(|d| naive_ngrams(&naive_tokens(d), n).contains(g)).count();
            (docs + 1.0).ln() - (df.max(1) as f64).ln()
        };
        let vec = |grams: &[String]| {
            let mut v: BTreeMap<String, f64> = BTreeMap::new();
            for g in grams {
                *v.entry(g.clone()).or_default() += 1.0;
            }
            for (g, x) in v.iter_mut() {
                *x *= idf(g);
            }
            v
        };
        let (vc, vr) = (vec(&cg), vec(&rg));
        let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let (nc, nr) = (norm(&vc), norm(&vr));
        let mut dot = 0.0;
        for (g, &x) in &vc {
            if let Some(&y) = vr.get(g) {
                dot += x.min(y) * y;
            }
        }
        let cos = if nc > 0.0 && nr > 0.0 { dot / (nc * nr) } else { 0.0 };
        let delta = ct.len() as f64 - rt.len() as f64;
        total += cos * (-(delta * delta) / 72.0).exp();
    }
    if orders == 0 {
        0.0
    } else {
        10.0 * total / orders as f64
    }
}

pub fn random_caption(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["a", "man", "dog", "red", "car", "in", "the", "park", "woman", "hat", "old"];
    let n = rng.gen_range(1..7);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

// ------------------------------------------------------------------ assignment

pub fn quad_loop_affinity(a: &Matrix, groups: &EntityGroupSet, clusters: &VisualClusterSet) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; clusters.clusters.len()]; groups.groups.len()];
    for (j, g) in groups.groups.iter().enumerate() {
        for (n, c) in clusters.clusters.iter().enumerate() {
            for s in g {
                for &b in c {
                    out[j][n] += a.get(s.query_row(), b) as f64;
                }
            }
        }
    }
    out
}

/// Random grouping of the slots of `events` events and a random partition of
/// `boxes` proposals into `clusters` non-empty clusters.
pub fn random_groups_and_clusters(
    rng: &mut ChaCha8Rng,
    events: usize,
    boxes: usize,
    clusters: usize,
) -> (EntityGroupSet, VisualClusterSet) {
    let slots: Vec<RoleSlotId> = (0..events).flat_map(|e| (0..6).map(move |r| RoleSlotId::new(e, r))).collect();
    let k = rng.gen_range(1..=slots.len());
    let mut groups = vec![Vec::new(); k];
    for s in slots {
        groups[rng.gen_range(0..k)].push(s);
    }
    groups.retain(|g| !g.is_empty());
    let mut cl: Vec<Vec<usize>> = (0..clusters).map(|c| vec![c]).collect();
    for b in clusters..boxes {
        cl[rng.gen_range(0..clusters)].push(b);
    }
    (
        EntityGroupSet { groups },
        VisualClusterSet { clusters: cl, level: 0 },
    )
}
