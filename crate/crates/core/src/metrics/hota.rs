//! HOTA tracking metric.
//!
//! Detections are matched per frame by a maximum-score assignment where the
//! score of a pair is its IoU times the global alignment of the two tracks.
//! The alignment is accumulated over all frames from the IoU normalised by
//! each frame's row and column sums. A matched pair counts as a true
//! positive at threshold α when its IoU is at least α.

use super::hungarian::hungarian_match;
use crate::model::BoundingBox;
use std::collections::BTreeMap;

const EPS: f64 = 1e-10;

/// Localization thresholds 0.05, 0.10, ..., 0.95.
pub fn alphas() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub boxes: Vec<(usize, BoundingBox)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    tracks: Vec<Track>,
}

impl TrackSet {
    /// Frame indices must be strictly increasing within each track.
    pub fn new(tracks: Vec<Track>) -> Result<Self, String> {
        for t in &tracks {
            if t.boxes.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("track {} has non-increasing frame indices", t.id));
            }
        }
        Ok(TrackSet { tracks })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn num_detections(&self) -> usize {
        self.tracks.iter().map(|t| t.boxes.len()).sum()
    }

    /// `frame -> [(track index, box)]`.
    fn by_frame(&self) -> BTreeMap<usize, Vec<(usize, BoundingBox)>> {
        let mut out: BTreeMap<usize, Vec<(usize, BoundingBox)>> = BTreeMap::new();
        for (i, t) in self.tracks.iter().enumerate() {
            for &(f, b) in &t.boxes {
                out.entry(f).or_default().push((i, b));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotaAlpha {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotaScore {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub per_alpha: Vec<HotaAlpha>,
}

/// `None` when the ground truth has no detections.
pub fn hota(pred: &TrackSet, gt: &TrackSet) -> Option<HotaScore> {
    if gt.num_detections() == 0 {
        return None;
    }
    let (ng, np) = (gt.tracks.len(), pred.tracks.len());
    let gt_frames = gt.by_frame();
    let pr_frames = pred.by_frame();
    let frames: Vec<usize> = gt_frames
        .keys()
        .chain(pr_frames.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let empty = Vec::new();

    let gt_count: Vec<f64> = gt.tracks.iter().map(|t| t.boxes.len() as f64).collect();
    let pr_count: Vec<f64> = pred.tracks.iter().map(|t| t.boxes.len() as f64).collect();
    let mut potential = vec![vec![0.0f64; np]; ng];

    let mut sims: Vec<Vec<Vec<f64>>> = Vec::with_capacity(frames.len());
    for f in &frames {
        let g = gt_frames.get(f).unwrap_or(&empty);
        let p = pr_frames.get(f).unwrap_or(&empty);
        let sim: Vec<Vec<f64>> = g
            .iter()
            .map(|(_, gb)| p.iter().map(|(_, pb)| gb.iou(pb)).collect())
            .collect();
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (a, (gi, _)) in g.iter().enumerate() {
            for (b, (pi, _)) in p.iter().enumerate() {
                let denom = row_sum[a] + col_sum[b] - sim[a][b];
                if denom > EPS {
                    potential[*gi][*pi] += sim[a][b] / denom;
                }
            }
        }
        sims.push(sim);
    }
    let align: Vec<Vec<f64>> = (0..ng)
        .map(|i| {
            (0..np)
                .map(|j| {
                    let d = gt_count[i] + pr_count[j] - potential[i][j];
                    if d > EPS {
                        potential[i][j] / d
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let alphas = alphas();
    let na = alphas.len();
    let mut tp = vec![0usize; na];
    let mut fn_ = vec![0usize; na];
    let mut fp = vec![0usize; na];
    let mut loc = vec![0.0f64; na];
    let mut matches = vec![vec![vec![0usize; np]; ng]; na];

    for (k, f) in frames.iter().enumerate() {
        let g = gt_frames.get(f).unwrap_or(&empty);
        let p = pr_frames.get(f).unwrap_or(&empty);
        let sim = &sims[k];
        let pairs = if g.is_empty() || p.is_empty() {
            Vec::new()
        } else {
            let cost: Vec<Vec<f64>> = g
                .iter()
                .enumerate()
                .map(|(a, (gi, _))| {
                    p.iter()
                        .enumerate()
                        .map(|(b, (pi, _))| -(align[*gi][*pi] * sim[a][b]))
                        .collect()
                })
                .collect();
            hungarian_match(&cost).pairs
        };
        for (ai, &alpha) in alphas.iter().enumerate() {
            let mut hit = 0usize;
            for &(a, b) in &pairs {
                if sim[a][b] >= alpha - EPS && sim[a][b] > 0.0 {
                    hit += 1;
                    loc[ai] += sim[a][b];
                    matches[ai][g[a].0][p[b].0] += 1;
                }
            }
            tp[ai] += hit;
            fn_[ai] += g.len() - hit;
            fp[ai] += p.len() - hit;
        }
    }

    let mut per_alpha = Vec::with_capacity(na);
    for ai in 0..na {
        let mut ass_sum = 0.0;
        for i in 0..ng {
            for j in 0..np {
                let m = matches[ai][i][j] as f64;
                if m > 0.0 {
                    ass_sum += m * (m / (gt_count[i] + pr_count[j] - m));
                }
            }
        }
        let t = tp[ai] as f64;
        let assa = ass_sum / t.max(1.0);
        let deta = t / (t + fn_[ai] as f64 + fp[ai] as f64).max(1.0);
        let loca = loc[ai].max(EPS) / t.max(EPS);
        per_alpha.push(HotaAlpha {
            alpha: alphas[ai],
            hota: (deta * assa).sqrt(),
            deta,
            assa,
            loca,
        });
    }
    let mean = |f: fn(&HotaAlpha) -> f64| per_alpha.iter().map(f).sum::<f64>() / na as f64;
    Some(HotaScore {
        hota: mean(|a| a.hota),
        deta: mean(|a| a.deta),
        assa: mean(|a| a.assa),
        loca: mean(|a| a.loca),
        per_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64) -> BoundingBox {
        BoundingBox::new(x, y, x + 1.0, y + 1.0).unwrap()
    }

    fn track(id: u64, boxes: &[(usize, f64)]) -> Track {
        Track {
            id,
            boxes: boxes.iter().map(|&(f, x)| (f, bb(x, 0.0))).collect(),
        }
    }

    #[test]
    fn perfect_tracking() {
        let gt = TrackSet::new(vec![track(1, &[(0, 0.0), (1, 0.5)]), track(2, &[(0, 5.0), (2, 5.0)])]).unwrap();
        let s = hota(&gt, &gt).unwrap();
        assert!((s.hota - 1.0).abs() < 1e-12);
        assert!((s.deta - 1.0).abs() < 1e-12);
        assert!((s.assa - 1.0).abs() < 1e-12);
        assert!((s.loca - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_and_empty() {
        let gt = TrackSet::new(vec![track(1, &[(0, 0.0), (1, 0.0)])]).unwrap();
        let pr = TrackSet::new(vec![track(7, &[(0, 10.0), (1, 10.0)])]).unwrap();
        let s = hota(&pr, &gt).unwrap();
        assert_eq!((s.hota, s.deta, s.assa), (0.0, 0.0, 0.0));
        assert_eq!(hota(&pr, &TrackSet::default()), None);
        let s = hota(&TrackSet::default(), &gt).unwrap();
        assert_eq!(s.hota, 0.0);
    }

    #[test]
    fn id_switch_halves_association() {
        // one GT track over 2 frames, prediction switches id halfway
        let gt = TrackSet::new(vec![track(1, &[(0, 0.0), (1, 0.0)])]).unwrap();
        let pr = TrackSet::new(vec![track(1, &[(0, 0.0)]), track(2, &[(1, 0.0)])]).unwrap();
        let s = hota(&pr, &gt).unwrap();
        assert!((s.deta - 1.0).abs() < 1e-12);
        assert!((s.assa - 0.5).abs() < 1e-12);
        assert!((s.hota - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn threshold_sweep() {
        // IoU 1/3 for a half-shifted unit square: TP for α ≤ 0.3333
        let gt = TrackSet::new(vec![track(1, &[(0, 0.0)])]).unwrap();
        let pr = TrackSet::new(vec![track(1, &[(0, 0.5)])]).unwrap();
        let s = hota(&pr, &gt).unwrap();
        let hits = s.per_alpha.iter().filter(|a| a.deta > 0.0).count();
        assert_eq!(hits, 6);
        assert!((s.deta - 6.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unordered_frames() {
        assert!(TrackSet::new(vec![track(1, &[(2, 0.0), (1, 0.0)])]).is_err());
    }
}
