//! Brute-force metric references, shared with the acceptance suite.
#![allow(dead_code)]

use rand::Rng;

/// 1-based rank of candidate `i`: everything scored higher, plus equal
/// scores earlier in the input, comes first.
pub fn rank_of(scores: &[f64], i: usize) -> usize {
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > scores[i] || (s == scores[i] && j < i))
        .count()
}

/// Every (positive, negative) pair: 1 for a win, 1/2 for a tie.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut halves = 0u64;
    let mut pairs = 0u64;
    for (p, _) in labels.iter().enumerate().filter(|(_, &y)| y == 1) {
        for (n, _) in labels.iter().enumerate().filter(|(_, &y)| y == 0) {
            pairs += 1;
            halves += if scores[p] > scores[n] {
                2
            } else if scores[p] == scores[n] {
                1
            } else {
                0
            };
        }
    }
    (pairs > 0).then(|| halves as f64 / (2 * pairs) as f64)
}

fn positive_ranks(scores: &[f64], labels: &[u8]) -> Vec<usize> {
    let mut ranks: Vec<usize> = (0..scores.len())
        .filter(|&i| labels[i] == 1)
        .map(|i| rank_of(scores, i))
        .collect();
    ranks.sort_unstable();
    ranks
}

pub fn mrr_brute(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let ranks = positive_ranks(scores, labels);
    if ranks.is_empty() {
        return None;
    }
    let sum: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Some(sum / ranks.len() as f64)
}

pub fn ndcg_brute(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    let ranks = positive_ranks(scores, labels);
    if ranks.is_empty() {
        return None;
    }
    let gain = |r: usize| 1.0 / ((r + 1) as f64).log2();
    let dcg: f64 = ranks.iter().filter(|&&r| r <= k).map(|&r| gain(r)).sum();
    let ideal: f64 = (1..=ranks.len().min(k)).map(gain).sum();
    Some(dcg / ideal)
}

/// 1 to 8 candidates with scores on a coarse grid so ties are common.
pub fn random_impression<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(1..=8);
    let scores = (0..n).map(|_| rng.random_range(0..6) as f64 / 8.0).collect();
    let labels = (0..n).map(|_| rng.random_range(0..=1)).collect();
    (scores, labels)
}
