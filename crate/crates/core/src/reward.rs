//! BLEU scoring and the harmonic content/sentiment reward.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BETA: f64 = 0.5;
pub const MAX_ORDER: usize = 4;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram matches and candidate n-gram total for one order.
fn matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let hit = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (hit, candidate.len().saturating_sub(n - 1))
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    (1.0 - ref_len as f64 / cand_len as f64).min(0.0).exp()
}

/// Smoothed sentence BLEU-4 in `[0, 1]`: unigram precision as is, add-one on
/// orders 2 to 4, geometric mean times brevity penalty. Empty candidate scores 0.
pub fn sentence_bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let (hit, total) = matches(candidate, reference, n);
        let p = if n == 1 {
            hit as f64 / total as f64
        } else {
            (hit + 1) as f64 / (total + 1) as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    (brevity_penalty(candidate.len(), reference.len()) * (log_sum / MAX_ORDER as f64).exp()).min(1.0)
}

/// Unsmoothed corpus BLEU-4 in `[0, 1]` with statistics pooled over all pairs.
pub fn corpus_bleu<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "corpus_bleu needs parallel lists");
    let mut hit = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=MAX_ORDER {
            let (h, t) = matches(c, r, n);
            hit[n - 1] += h;
            total[n - 1] += t;
        }
    }
    if c_len == 0 || hit.iter().any(|&h| h == 0) {
        return 0.0;
    }
    let log_sum: f64 = (0..MAX_ORDER)
        .map(|i| (hit[i] as f64 / total[i] as f64).ln())
        .sum();
    (brevity_penalty(c_len, r_len) * (log_sum / MAX_ORDER as f64).exp()).min(1.0)
}

/// Weighted harmonic mean of BLEU and confidence; zero when both are zero.
pub fn harmonic_reward(bleu: f64, confid: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * bleu + confid;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + b2) * bleu * confid / denom
}

pub fn combined_reward(r1: f64, r2: f64) -> f64 {
    r1 + r2
}

/// Reward components for one sentence: path 1 regenerates with the source
/// sentiment, path 2 transfers to the opposite one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub bleu1: f64,
    pub confid1: f64,
    pub r1: f64,
    pub bleu2: f64,
    pub confid2: f64,
    pub r2: f64,
    pub rc: f64,
    pub baseline: f64,
}

impl RewardRecord {
    pub fn new(bleu1: f64, confid1: f64, bleu2: f64, confid2: f64, beta: f64) -> Self {
        let r1 = harmonic_reward(bleu1, confid1, beta);
        let r2 = harmonic_reward(bleu2, confid2, beta);
        RewardRecord { bleu1, confid1, r1, bleu2, confid2, r2, rc: combined_reward(r1, r2), baseline: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        [self.bleu1, self.confid1, self.r1, self.bleu2, self.confid2, self.r2, self.rc, self.baseline]
            .iter()
            .all(|v| v.is_finite())
    }
}
