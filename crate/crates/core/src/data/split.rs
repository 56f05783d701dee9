use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{Corpus, Dataset, Impression};
use crate::error::Result;

/// Splits off the last `fraction` of impressions by timestamp (ties by id) as
/// validation. At least one impression stays on each side when possible.
pub fn split_by_time(impressions: &[Impression], fraction: f64) -> (Vec<Impression>, Vec<Impression>) {
    let keys: Vec<(i64, &str)> = impressions.iter().map(|i| (i.timestamp, i.id.as_str())).collect();
    let (train, val) = split_indices_by_time(&keys, fraction);
    let pick = |idx: Vec<usize>| idx.into_iter().map(|k| impressions[k].clone()).collect();
    (pick(train), pick(val))
}

/// Index form of [`split_by_time`] over `(timestamp, id)` keys. Both halves
/// come back in time order.
pub fn split_indices_by_time(keys: &[(i64, &str)], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut sorted: Vec<usize> = (0..keys.len()).collect();
    sorted.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let n = sorted.len();
    let n_val = if n >= 2 {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let val = sorted.split_off(n - n_val);
    (sorted, val)
}

/// Keeps the impressions of `n_users` users drawn with a seeded RNG, plus the
/// articles they reference.
pub fn subsample_users(dataset: &Dataset, n_users: usize, seed: u64) -> Result<Dataset> {
    let users: Vec<&str> = dataset
        .impressions
        .iter()
        .map(|i| i.user.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: BTreeSet<&str> = users.choose_multiple(&mut rng, n_users).copied().collect();
    let impressions: Vec<Impression> = dataset
        .impressions
        .iter()
        .filter(|i| keep.contains(i.user.as_str()))
        .cloned()
        .collect();
    let referenced: BTreeSet<&str> = impressions
        .iter()
        .flat_map(|i| i.history.iter().chain(i.candidates.iter().map(|(c, _)| c)))
        .map(String::as_str)
        .collect();
    let articles = dataset
        .corpus
        .articles()
        .iter()
        .filter(|a| referenced.contains(a.id.as_str()))
        .cloned()
        .collect();
    let users = dataset
        .users
        .iter()
        .filter(|(id, _)| keep.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(Dataset {
        corpus: Corpus::new(articles)?,
        impressions,
        users,
    })
}
