//! Entity visual clustering: first-neighbor hierarchical clustering of box
//! embeddings into video-level entity tracks.
//!
//! Two track constraints shape the distance matrix. Boxes of the same frame
//! are never in one track (distance `+inf`), and boxes of one shot-level
//! tracklet are pulled together by scaling their distance by a small factor.
//!
//! [`finch_partition_step`] is the plain first-neighbor step: link every point
//! to its nearest neighbor and take connected components. Components of that
//! graph can still bridge two same-frame boxes through a common neighbor, so
//! the hierarchy builder uses a constrained variant that adds the links in
//! ascending distance order and skips any link that would put two boxes of one
//! frame into the same cluster. Level 0 additionally links the members of each
//! tracklet before any first-neighbor link.

use std::collections::HashMap;

use crate::error::{MecError, Result};
use crate::model::{EmbeddingMatrix, ProposalSet, VisualClusterSet};

pub const DEFAULT_TRACKLET_SCALE: f64 = 1e-5;
pub const DEFAULT_LEVELS: usize = 2;

/// Symmetric `n × n` distances with zero diagonal; `f64::INFINITY` marks
/// pairs that may never be linked.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistanceMatrix { n, data }
    }

    /// Build from a full row-major matrix, checking symmetry, the zero
    /// diagonal and non-negativity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(MecError::Index(format!("row {i} has {} entries, want {n}", r.len())));
            }
            if r[i] != 0.0 {
                return Err(MecError::Index(format!("diagonal entry {i} is {}", r[i])));
            }
            for (j, &v) in r.iter().enumerate() {
                if v.is_nan() || v < 0.0 || v != rows[j][i] {
                    return Err(MecError::Index(format!("entry ({i},{j}) = {v} is invalid")));
                }
            }
        }
        Ok(DistanceMatrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn cosine_from_vectors(vectors: &[Vec<f64>]) -> DistanceMatrix {
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    DistanceMatrix::from_fn(vectors.len(), |i, j| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            return 1.0;
        }
        let d: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
        (1.0 - d / (norms[i] * norms[j])).clamp(0.0, 2.0)
    })
}

/// `D[i][j] = 1 - cos(x_i, x_j)`.
pub fn cosine_distance_matrix(embeddings: &EmbeddingMatrix) -> Result<DistanceMatrix> {
    let n = embeddings.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| dot(embeddings.row(i), embeddings.row(i)).sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&x| x == 0.0) {
        return Err(MecError::DegenerateEmbedding { row });
    }
    Ok(DistanceMatrix::from_fn(n, |i, j| {
        let c = dot(embeddings.row(i), embeddings.row(j)) / (norms[i] * norms[j]);
        (1.0 - c).clamp(0.0, 2.0)
    }))
}

/// Same-frame pairs become `+inf`; same-tracklet pairs are multiplied by
/// `tracklet_scale`. The same-frame rule wins when both apply.
pub fn apply_constraints(
    d: &DistanceMatrix,
    proposals: &ProposalSet,
    tracklet_scale: f64,
) -> DistanceMatrix {
    let p = &proposals.proposals;
    let mut out = d.clone();
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            if p[i].frame_index == p[j].frame_index {
                out.set_pair(i, j, f64::INFINITY);
            } else if p[i].tracklet_id == p[j].tracklet_id {
                out.set_pair(i, j, tracklet_scale * d.get(i, j));
            }
        }
    }
    out
}

/// Nearest finite neighbor of every point; ties go to the lowest index.
pub fn first_neighbors(d: &DistanceMatrix) -> Vec<Option<usize>> {
    (0..d.len())
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..d.len() {
                let v = d.get(i, j);
                if j == i || !v.is_finite() {
                    continue;
                }
                if best.map_or(true, |(_, b)| v < b) {
                    best = Some((j, v));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the surviving root, or `None` if already joined.
    fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        Some((keep, gone))
    }

    /// Component labels numbered by first appearance.
    fn labels(&mut self) -> Vec<usize> {
        let mut ids: HashMap<usize, usize> = HashMap::new();
        (0..self.parent.len())
            .map(|i| {
                let r = self.find(i);
                let next = ids.len();
                *ids.entry(r).or_insert(next)
            })
            .collect()
    }
}

/// Relabel so labels are numbered by first appearance.
pub fn normalize_labels(labels: &[usize]) -> Vec<usize> {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect()
}

/// One first-neighbor partition step: connected components of the graph
/// linking each point to its nearest neighbor. Points with no finite
/// neighbor stay singletons.
pub fn finch_partition_step(d: &DistanceMatrix) -> Vec<usize> {
    let mut uf = UnionFind::new(d.len());
    for (i, nn) in first_neighbors(d).into_iter().enumerate() {
        if let Some(j) = nn {
            uf.union(i, j);
        }
    }
    uf.labels()
}

/// Small bitset over frame indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct FrameSet(Vec<u64>);

impl FrameSet {
    fn single(frame: usize) -> Self {
        let mut words = vec![0u64; frame / 64 + 1];
        words[frame / 64] |= 1 << (frame % 64);
        FrameSet(words)
    }

    fn intersects(&self, other: &FrameSet) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }

    fn absorb(&mut self, other: &FrameSet) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), 0);
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

/// First-neighbor step that never joins two points whose frame sets overlap.
/// `must_link` pairs are joined first, then first-neighbor links in ascending
/// `(distance, point)` order.
fn constrained_step(
    d: &DistanceMatrix,
    frames: &[FrameSet],
    must_link: &[(usize, usize)],
) -> Vec<usize> {
    let n = d.len();
    let mut uf = UnionFind::new(n);
    let mut root_frames: Vec<FrameSet> = frames.to_vec();

    let mut try_join = |uf: &mut UnionFind, a: usize, b: usize| {
        let (ra, rb) = (uf.find(a), uf.find(b));
        if ra == rb || root_frames[ra].intersects(&root_frames[rb]) {
            return;
        }
        if let Some((keep, gone)) = uf.union(ra, rb) {
            let moved = std::mem::take(&mut root_frames[gone]);
            root_frames[keep].absorb(&moved);
        }
    };

    for &(a, b) in must_link {
        try_join(&mut uf, a, b);
    }
    let mut links: Vec<(f64, usize, usize)> = first_neighbors(d)
        .into_iter()
        .enumerate()
        .filter_map(|(i, nn)| nn.map(|j| (d.get(i, j), i, j)))
        .collect();
    links.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    for (_, i, j) in links {
        try_join(&mut uf, i, j);
    }
    uf.labels()
}

/// Successive partitions of the proposals, finest first. Each level maps
/// every proposal to a cluster label (numbered by first appearance).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionHierarchy {
    levels: Vec<Vec<usize>>,
}

impl PartitionHierarchy {
    pub fn from_levels(levels: Vec<Vec<usize>>) -> Self {
        PartitionHierarchy { levels }
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_clusters(&self, level: usize) -> usize {
        self.levels[level].iter().max().map_or(0, |m| m + 1)
    }
}

fn frames_of_clusters(labels: &[usize], k: usize, proposals: &ProposalSet) -> Vec<FrameSet> {
    let mut sets = vec![FrameSet::default(); k];
    for (p, &l) in labels.iter().enumerate() {
        sets[l].absorb(&FrameSet::single(proposals.proposals[p].frame_index));
    }
    sets
}

fn cluster_means(labels: &[usize], k: usize, embeddings: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    let dim = embeddings.cols();
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(embeddings.row(p)) {
            *s += x as f64;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// Build up to `levels` partitions. Level 0 clusters boxes under both track
/// constraints; every further level clusters the means of the previous
/// level's clusters, with clusters sharing a frame kept apart. Stops early
/// once a step merges nothing.
pub fn finch_hierarchy(
    embeddings: &EmbeddingMatrix,
    proposals: &ProposalSet,
    tracklet_scale: f64,
    levels: usize,
) -> Result<PartitionHierarchy> {
    let n = proposals.len();
    if embeddings.rows() != n {
        return Err(MecError::Index(format!(
            "{} embeddings for {n} proposals",
            embeddings.rows()
        )));
    }
    if n == 0 || levels == 0 {
        return Ok(PartitionHierarchy { levels: vec![Vec::new(); levels.min(1)] });
    }

    let d = apply_constraints(&cosine_distance_matrix(embeddings)?, proposals, tracklet_scale);
    let frames: Vec<FrameSet> = proposals
        .proposals
        .iter()
        .map(|p| FrameSet::single(p.frame_index))
        .collect();
    let mut last_member: HashMap<i64, usize> = HashMap::new();
    let mut must_link = Vec::new();
    for (i, p) in proposals.proposals.iter().enumerate() {
        if let Some(prev) = last_member.insert(p.tracklet_id, i) {
            must_link.push((prev, i));
        }
    }

    let mut hierarchy = vec![constrained_step(&d, &frames, &must_link)];
    while hierarchy.len() < levels {
        let current = hierarchy.last().expect("non-empty");
        let k = current.iter().max().map_or(0, |m| m + 1);
        if k <= 1 {
            break;
        }
        let frame_sets = frames_of_clusters(current, k, proposals);
        let base = cosine_from_vectors(&cluster_means(current, k, embeddings));
        let d = DistanceMatrix::from_fn(k, |a, b| {
            if frame_sets[a].intersects(&frame_sets[b]) {
                f64::INFINITY
            } else {
                base.get(a, b)
            }
        });
        let merged = constrained_step(&d, &frame_sets, &[]);
        let next_k = merged.iter().max().map_or(0, |m| m + 1);
        if next_k == k {
            break;
        }
        let next = normalize_labels(&current.iter().map(|&l| merged[l]).collect::<Vec<_>>());
        hierarchy.push(next);
    }
    Ok(PartitionHierarchy { levels: hierarchy })
}

/// Clusters of one level. Levels past the last computed one are clamped.
pub fn clusters_from_hierarchy(h: &PartitionHierarchy, level: usize) -> VisualClusterSet {
    if h.levels.is_empty() {
        return VisualClusterSet {
            clusters: Vec::new(),
            level: 0,
        };
    }
    let last = h.levels.len() - 1;
    let level = if level > last {
        log::warn!("requested hierarchy level {level}, clamping to {last}");
        last
    } else {
        level
    };
    let labels = &h.levels[level];
    let mut clusters = vec![Vec::new(); h.num_clusters(level)];
    for (p, &l) in labels.iter().enumerate() {
        clusters[l].push(p);
    }
    VisualClusterSet { clusters, level }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, BoxProposal, Matrix};
    use std::collections::BTreeSet;

    fn proposal(frame: usize, slot: usize, tracklet: i64, shot: i64) -> BoxProposal {
        BoxProposal {
            frame_index: frame,
            slot_index: slot,
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            tracklet_id: tracklet,
            shot_id: shot,
        }
    }

    fn set(proposals: Vec<BoxProposal>) -> ProposalSet {
        ProposalSet {
            video_id: "v".into(),
            num_frames: 11,
            max_slots: 15,
            proposals,
        }
    }

    /// Components of the first-neighbor graph by repeated reachability.
    fn oracle_components(d: &DistanceMatrix) -> BTreeSet<BTreeSet<usize>> {
        let n = d.len();
        let mut nn = vec![None; n];
        for i in 0..n {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if j != i && d.get(i, j) < best {
                    best = d.get(i, j);
                    nn[i] = Some(j);
                }
            }
        }
        let adj = |i: usize, j: usize| {
            nn[i] == Some(j) || nn[j] == Some(i) || (nn[i].is_some() && nn[i] == nn[j])
        };
        let mut seen = vec![false; n];
        let mut out = BTreeSet::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = BTreeSet::from([s]);
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if !seen[v] && adj(u, v) {
                        seen[v] = true;
                        comp.insert(v);
                        stack.push(v);
                    }
                }
            }
            out.insert(comp);
        }
        out
    }

    fn as_sets(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let mut m: HashMap<usize, BTreeSet<usize>> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            m.entry(l).or_default().insert(i);
        }
        m.into_values().collect()
    }

    #[test]
    fn cosine_basics() {
        let same = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.5, 1.0]]).unwrap();
        let d = cosine_distance_matrix(&same).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(d.get(i, j).abs() < 1e-12);
            }
        }
        let ortho = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert!((cosine_distance_matrix(&ortho).unwrap().get(0, 1) - 1.0).abs() < 1e-12);

        let zero = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            cosine_distance_matrix(&zero),
            Err(MecError::DegenerateEmbedding { row: 1 })
        ));
    }

    #[test]
    fn cosine_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let d = cosine_distance_matrix(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
                for k in 0..8 {
                    let (a, b) = (rows[i][k] as f64, rows[j][k] as f64);
                    ab += a * b;
                    aa += a * a;
                    bb += b * b;
                }
                let expected = if i == j { 0.0 } else { 1.0 - ab / (aa.sqrt() * bb.sqrt()) };
                assert!((d.get(i, j) - expected).abs() < 1e-6);
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn constraints_rules() {
        let props = set(vec![
            proposal(0, 0, 1, 0),
            proposal(0, 1, 2, 0),
            proposal(1, 0, 1, 0),
        ]);
        let d = DistanceMatrix::from_fn(3, |_, _| 0.4);
        let c = apply_constraints(&d, &props, DEFAULT_TRACKLET_SCALE);
        assert_eq!(c.get(0, 1), f64::INFINITY);
        assert_eq!(c.get(1, 0), f64::INFINITY);
        assert!((c.get(0, 2) - 4e-6).abs() < 1e-18);
        assert_eq!(c.get(1, 2), 0.4);
        assert_eq!(c.get(2, 2), 0.0);
    }

    #[test]
    fn partition_step_examples() {
        assert_eq!(finch_partition_step(&DistanceMatrix::from_fn(1, |_, _| 0.0)), vec![0]);

        let xs = [0.0f64, 0.1, 10.0, 10.1];
        let d = DistanceMatrix::from_fn(4, |i, j| (xs[i] - xs[j]).abs());
        let labels = finch_partition_step(&d);
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert_eq!(as_sets(&labels), oracle_components(&d));

        // identical features for 0 and 1 but same frame; 2 is far away
        let raw = DistanceMatrix::from_fn(3, |i, j| if (i, j) == (0, 1) { 0.0 } else { 0.9 });
        let props = set(vec![proposal(0, 0, 1, 0), proposal(0, 1, 2, 0), proposal(1, 0, 3, 0)]);
        let c = apply_constraints(&raw, &props, DEFAULT_TRACKLET_SCALE);
        let labels = finch_partition_step(&c);
        assert_eq!(as_sets(&labels), oracle_components(&c));
        // both link to point 2 and get bridged by the plain step ...
        assert_eq!(labels, vec![0, 0, 0]);
        // ... which the hierarchy's constrained step refuses
        let frames: Vec<FrameSet> = props.proposals.iter().map(|p| FrameSet::single(p.frame_index)).collect();
        let constrained = constrained_step(&c, &frames, &[]);
        assert_ne!(constrained[0], constrained[1]);
    }

    #[test]
    fn all_infinite_stays_singletons() {
        let n = 5;
        let props = set((0..n).map(|s| proposal(0, s, s as i64, 0)).collect());
        let x = Matrix::from_rows(&vec![vec![1.0f32, 0.5]; n]).unwrap();
        let h = finch_hierarchy(&x, &props, DEFAULT_TRACKLET_SCALE, 2).unwrap();
        for level in h.levels() {
            assert_eq!(level, &(0..n).collect::<Vec<_>>());
        }
        let c = clusters_from_hierarchy(&h, 0);
        assert_eq!(c.len(), n);
        // beyond fixpoint clamps
        assert_eq!(clusters_from_hierarchy(&h, 7).level, h.num_levels() - 1);
    }

    /// 2 shots x 2 tracklets; tracklet `a` in shot 0 looks like `a'` in shot 1.
    fn two_shot_fixture() -> (Matrix, ProposalSet) {
        let mut props = Vec::new();
        let mut rows = Vec::new();
        let u = [1.0f32, 0.0, 0.0, 0.02];
        let v = [0.0f32, 1.0, 0.0, 0.02];
        for frame in 0..3 {
            props.push(proposal(frame, 0, 10, 0));
            rows.push(vec![u[0], u[1] + 0.01 * frame as f32, u[2], u[3]]);
            props.push(proposal(frame, 1, 11, 0));
            rows.push(vec![v[0] + 0.01 * frame as f32, v[1], v[2], v[3]]);
        }
        for frame in 3..6 {
            props.push(proposal(frame, 0, 20, 1));
            rows.push(vec![u[0], u[1], u[2] + 0.01 * frame as f32, u[3]]);
            props.push(proposal(frame, 1, 21, 1));
            rows.push(vec![v[0], v[1], v[2] + 0.01 * frame as f32, v[3]]);
        }
        (Matrix::from_rows(&rows).unwrap(), set(props))
    }

    #[test]
    fn two_shot_fixture_links_across_shots() {
        let (x, props) = two_shot_fixture();
        let h = finch_hierarchy(&x, &props, DEFAULT_TRACKLET_SCALE, 2).unwrap();
        assert_eq!(h.num_clusters(0), 4);
        let c = clusters_from_hierarchy(&h, 1);
        assert_eq!(c.level, 1);
        let tracklets: Vec<BTreeSet<i64>> = c
            .clusters
            .iter()
            .map(|m| m.iter().map(|&p| props.proposals[p].tracklet_id).collect())
            .collect();
        assert_eq!(tracklets, vec![BTreeSet::from([10, 20]), BTreeSet::from([11, 21])]);
    }

    #[test]
    fn partition_step_matches_oracle_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let d = DistanceMatrix::from_fn(n, |_, _| {
                if rng.gen_bool(0.2) {
                    f64::INFINITY
                } else {
                    rng.gen_range(0.0..2.0)
                }
            });
            assert_eq!(as_sets(&finch_partition_step(&d)), oracle_components(&d));
        }
    }
}
