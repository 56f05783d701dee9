//! Impression-grouped ranking metrics and unique-visitor click-through rate.
//!
//! Rankings are by descending score; ties keep input order (stable sort).

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores and binary labels for one impression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImpression {
    pub id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl RankedImpression {
    pub fn new(id: impl Into<String>, scores: Vec<f64>, labels: Vec<u8>) -> Self {
        assert_eq!(scores.len(), labels.len(), "one label per score");
        Self {
            id: id.into(),
            scores,
            labels,
        }
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y > 0).count()
    }

    /// Contributes to the report only with at least one positive and one negative.
    pub fn is_valid(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.labels.len()
    }
}

/// Candidate indices by descending score, ties in input order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

pub fn has_ties(scores: &[f64]) -> bool {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` without both classes.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y > 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Mann-Whitney U with mid-ranks for ties; ranks are doubled to stay integral.
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank2 = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1, mid-rank (i+j+2)/2
        let mid2 = (i + j + 2) as u64;
        for &k in &idx[i..=j] {
            if labels[k] > 0 {
                pos_rank2 += mid2;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let u2 = pos_rank2 - p * (p + 1);
    Some(u2 as f64 / (2 * p * n) as f64)
}

/// Mean reciprocal rank over every positive. `None` without positives.
pub fn mrr(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let order = rank_order(scores);
    let rr: Vec<f64> = order
        .iter()
        .enumerate()
        .filter(|(_, &i)| labels[i] > 0)
        .map(|(r, _)| 1.0 / (r + 1) as f64)
        .collect();
    if rr.is_empty() {
        return None;
    }
    Some(rr.iter().sum::<f64>() / rr.len() as f64)
}

/// nDCG at cutoff `k` with binary gains. `None` without positives.
pub fn ndcg_at(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y > 0).count();
    if n_pos == 0 {
        return None;
    }
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = rank_order(scores)
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| labels[i] > 0)
        .map(|(r, _)| discount(r))
        .sum();
    let ideal: f64 = (0..n_pos.min(k)).map(discount).sum();
    Some(dcg / ideal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
    pub n_impressions: usize,
    pub n_excluded: usize,
    /// Valid impressions whose scores contain ties.
    pub n_tied: usize,
    /// AUC over all (positive, negative) pairs of valid impressions pooled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_auc: Option<f64>,
}

/// Averages each metric over impressions that have both classes.
pub fn evaluate(impressions: &[RankedImpression], with_global_auc: bool) -> EvalReport {
    let valid: Vec<&RankedImpression> = impressions.iter().filter(|i| i.is_valid()).collect();
    let mean = |f: &dyn Fn(&RankedImpression) -> Option<f64>| -> Option<f64> {
        if valid.is_empty() {
            return None;
        }
        let total: f64 = valid.iter().map(|i| f(i).expect("valid impression")).sum();
        Some(total / valid.len() as f64)
    };
    let global_auc = with_global_auc.then(|| {
        let scores: Vec<f64> = valid.iter().flat_map(|i| i.scores.iter().copied()).collect();
        let labels: Vec<u8> = valid.iter().flat_map(|i| i.labels.iter().copied()).collect();
        auc(&scores, &labels)
    });
    EvalReport {
        auc: mean(&|i| auc(&i.scores, &i.labels)),
        mrr: mean(&|i| mrr(&i.scores, &i.labels)),
        ndcg5: mean(&|i| ndcg_at(&i.scores, &i.labels, 5)),
        ndcg10: mean(&|i| ndcg_at(&i.scores, &i.labels, 10)),
        n_impressions: valid.len(),
        n_excluded: impressions.len() - valid.len(),
        n_tied: valid.iter().filter(|i| has_ties(&i.scores)).count(),
        global_auc: global_auc.flatten(),
    }
}

/// One user's homepage activity on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub day: i64,
    pub user_id: String,
    pub visited_homepage: bool,
    pub clicked_any: bool,
}

/// Unique clickers over unique homepage visitors for days in `window`.
/// `Ok(None)` when nobody visited.
pub fn uvctr(log: &[VisitRecord], window: RangeInclusive<i64>) -> Result<Option<f64>> {
    let mut visitors = BTreeSet::new();
    let mut clickers = BTreeSet::new();
    for r in log {
        if r.clicked_any && !r.visited_homepage {
            return Err(Error::Invalid(format!(
                "user `{}` clicked on day {} without visiting",
                r.user_id, r.day
            )));
        }
        if !window.contains(&r.day) {
            continue;
        }
        if r.visited_homepage {
            visitors.insert(r.user_id.as_str());
        }
        if r.clicked_any {
            clickers.insert(r.user_id.as_str());
        }
    }
    if visitors.is_empty() {
        return Ok(None);
    }
    Ok(Some(clickers.len() as f64 / visitors.len() as f64))
}
