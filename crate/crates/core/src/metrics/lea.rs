//! LEA link-based entity-aware coreference scores, and the caption-weighted
//! LEA-Soft variant.
//!
//! `link(e) = |e|·(|e|-1)/2`. An entity's resolution is the fraction of its
//! links reproduced by the other partition; entities are weighted by size.
//! A singleton has one self-link, resolved iff the other partition also has
//! it as a singleton.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LeaScore {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LeaScore {
            precision,
            recall,
            f1,
        }
    }

    const ZERO: LeaScore = LeaScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

fn links(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Which side(s) of LEA-Soft are weighted by caption quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftWeighting {
    #[default]
    Both,
    RecallOnly,
    PrecisionOnly,
}

/// Size-weighted resolution of `entities` against `other`. `weight` gives a
/// per-mention factor applied to reproduced links (mean of the two ends).
fn resolution<M: Eq + Hash + Copy>(
    entities: &[Vec<M>],
    other: &[Vec<M>],
    weight: &dyn Fn(M) -> f64,
) -> f64 {
    let owner: HashMap<M, usize> = other
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.iter().map(move |&m| (m, i)))
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for e in entities {
        if e.is_empty() {
            continue;
        }
        let size = e.len() as f64;
        den += size;
        if e.len() == 1 {
            let m = e[0];
            if let Some(&o) = owner.get(&m) {
                if other[o].len() == 1 {
                    num += size * weight(m);
                }
            }
            continue;
        }
        let mut parts: BTreeMap<usize, Vec<M>> = BTreeMap::new();
        for &m in e {
            if let Some(&o) = owner.get(&m) {
                parts.entry(o).or_default().push(m);
            }
        }
        let mut reproduced = 0.0;
        for members in parts.values() {
            for (a, &x) in members.iter().enumerate() {
                for &y in &members[a + 1..] {
                    reproduced += (weight(x) + weight(y)) / 2.0;
                }
            }
        }
        num += size * reproduced / links(e.len());
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// LEA of `response` against `key`. An empty key scores zero.
pub fn lea<M: Eq + Hash + Copy>(key: &[Vec<M>], response: &[Vec<M>]) -> LeaScore {
    if key.iter().all(Vec::is_empty) {
        log::warn!("empty key partition; LEA is zero");
        return LeaScore::ZERO;
    }
    let one = |_: M| 1.0;
    LeaScore::from_pr(resolution(response, key, &one), resolution(key, response, &one))
}

/// LEA where each reproduced link counts with the caption quality of its
/// mentions, `weights[m] ∈ [0, 1]` (CIDEr / 10). Missing weights count as 0.
pub fn lea_soft<M: Eq + Hash + Copy>(
    key: &[Vec<M>],
    response: &[Vec<M>],
    weights: &HashMap<M, f64>,
    mode: SoftWeighting,
) -> LeaScore {
    if key.iter().all(Vec::is_empty) {
        log::warn!("empty key partition; LEA-Soft is zero");
        return LeaScore::ZERO;
    }
    let soft = |m: M| weights.get(&m).copied().unwrap_or(0.0).clamp(0.0, 1.0);
    let hard = |_: M| 1.0;
    let (p_w, r_w): (&dyn Fn(M) -> f64, &dyn Fn(M) -> f64) = match mode {
        SoftWeighting::Both => (&soft, &soft),
        SoftWeighting::RecallOnly => (&hard, &soft),
        SoftWeighting::PrecisionOnly => (&soft, &hard),
    };
    LeaScore::from_pr(resolution(response, key, p_w), resolution(key, response, r_w))
}
