//! CIDEr-D caption similarity.
//!
//! Sentences are lowercased, stripped of punctuation and split on whitespace.
//! For each n-gram order 1..=4 a sentence becomes a TF-IDF vector; a
//! candidate/reference pair scores the clipped cosine of their vectors times a
//! Gaussian length penalty (σ = 6), averaged over orders and scaled by 10.
//!
//! Two conventions keep identical pairs at exactly 10 for every corpus:
//! IDF is `ln(N + 1) - ln(max(1, df))`, so it stays positive even for n-grams
//! present in every document, and orders for which neither sentence has an
//! n-gram (short captions) are left out of the average.

use std::collections::{BTreeMap, HashMap, HashSet};

pub const MAX_N: usize = 4;
pub const SIGMA: f64 = 6.0;
pub const SCALE: f64 = 10.0;

pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

type Counts = BTreeMap<Vec<String>, usize>;

fn ngram_counts(tokens: &[String]) -> [Counts; MAX_N] {
    let mut out: [Counts; MAX_N] = Default::default();
    for (n, counts) in out.iter_mut().enumerate() {
        for w in tokens.windows(n + 1) {
            *counts.entry(w.to_vec()).or_default() += 1;
        }
    }
    out
}

/// TF-IDF representation of one sentence.
#[derive(Debug, Clone)]
struct SentenceVec {
    vecs: [BTreeMap<Vec<String>, f64>; MAX_N],
    norms: [f64; MAX_N],
    len: usize,
}

/// Document frequencies of an IDF corpus; one document per reference set.
/// The corpus should be non-empty: with no documents every IDF is zero.
#[derive(Debug, Clone, Default)]
pub struct CiderScorer {
    df: HashMap<Vec<String>, usize>,
    log_docs: f64,
}

impl CiderScorer {
    /// Each document is a set of reference sentences.
    pub fn from_documents<D, S>(docs: impl IntoIterator<Item = D>) -> Self
    where
        D: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        let mut n_docs = 0usize;
        for doc in docs {
            n_docs += 1;
            let mut seen: HashSet<Vec<String>> = HashSet::new();
            for sentence in doc {
                for counts in ngram_counts(&tokenize(sentence.as_ref())) {
                    seen.extend(counts.into_keys());
                }
            }
            for g in seen {
                *df.entry(g).or_default() += 1;
            }
        }
        CiderScorer {
            df,
            log_docs: ((n_docs + 1) as f64).ln(),
        }
    }

    /// One document per caption.
    pub fn from_captions<S: AsRef<str>>(captions: impl IntoIterator<Item = S>) -> Self {
        Self::from_documents(captions.into_iter().map(|c| [c]))
    }

    pub fn idf(&self, ngram: &[String]) -> f64 {
        let df = self.df.get(ngram).copied().unwrap_or(0).max(1);
        self.log_docs - (df as f64).ln()
    }

    fn vectorize(&self, sentence: &str) -> SentenceVec {
        let tokens = tokenize(sentence);
        let counts = ngram_counts(&tokens);
        let mut vecs: [BTreeMap<Vec<String>, f64>; MAX_N] = Default::default();
        let mut norms = [0.0; MAX_N];
        for n in 0..MAX_N {
            for (g, &tf) in &counts[n] {
                let v = tf as f64 * self.idf(g);
                norms[n] += v * v;
                vecs[n].insert(g.clone(), v);
            }
            norms[n] = norms[n].sqrt();
        }
        SentenceVec {
            vecs,
            norms,
            len: tokens.len(),
        }
    }

    fn pair(&self, cand: &SentenceVec, reference: &SentenceVec) -> f64 {
        let delta = cand.len as f64 - reference.len as f64;
        let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
        let mut total = 0.0;
        let mut orders = 0usize;
        for n in 0..MAX_N {
            if cand.vecs[n].is_empty() && reference.vecs[n].is_empty() {
                continue;
            }
            orders += 1;
            let mut val = 0.0;
            for (g, &h) in &cand.vecs[n] {
                if let Some(&r) = reference.vecs[n].get(g) {
                    val += h.min(r) * r;
                }
            }
            if cand.norms[n] != 0.0 && reference.norms[n] != 0.0 {
                val /= cand.norms[n] * reference.norms[n];
            } else {
                val = 0.0;
            }
            total += val * penalty;
        }
        if orders == 0 {
            0.0
        } else {
            SCALE * total / orders as f64
        }
    }

    /// Score of one candidate against its references, in `[0, 10]`.
    pub fn score<S: AsRef<str>>(&self, candidate: &str, references: &[S]) -> f64 {
        let cand = self.vectorize(candidate);
        if cand.len == 0 || references.is_empty() {
            return 0.0;
        }
        let sum: f64 = references
            .iter()
            .map(|r| self.pair(&cand, &self.vectorize(r.as_ref())))
            .sum();
        sum / references.len() as f64
    }

    /// Per-pair scores and their mean (`None` for no pairs).
    pub fn corpus_score<S: AsRef<str>, R: AsRef<str>>(
        &self,
        candidates: &[S],
        references: &[Vec<R>],
    ) -> (Vec<f64>, Option<f64>) {
        let scores: Vec<f64> = candidates
            .iter()
            .zip(references)
            .map(|(c, r)| self.score(c.as_ref(), r))
            .collect();
        let mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        (scores, mean)
    }
}

/// Mean CIDEr-D of candidate/reference pairs under `idf_corpus`.
pub fn cider<S: AsRef<str>, R: AsRef<str>, C: AsRef<str>>(
    candidates: &[S],
    references: &[Vec<R>],
    idf_corpus: &[C],
) -> Option<f64> {
    CiderScorer::from_captions(idf_corpus)
        .corpus_score(candidates, references)
        .1
}
