//! Seeded synthetic corpora with planted click rules.
//!
//! Articles belong to latent topics; each topic owns a small vocabulary, so a
//! frozen bag-of-words embedder can see the topic through the title and body.
//! Users click according to a planted rule whose exact probabilities are
//! returned alongside the data for verification.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{Article, Corpus, Dataset, Impression};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClickRule {
    /// `P(click) = sigmoid(scale · uᵀ M v + bias)` with latent user/article vectors.
    PlantedBilinear,
    /// Each user likes two topics; topic popularity is balanced across users.
    TopicAffinity,
    /// Long-term topic preference plus a short-lived interest carried by the
    /// most recent, fresh history articles.
    MixedFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_articles: usize,
    pub n_impressions: usize,
    pub embed_dim: usize,
    pub topic_count: usize,
    pub seed: u64,
    pub click_rule: ClickRule,
    #[serde(default = "default_candidates")]
    pub candidates_per_impression: usize,
    #[serde(default = "default_history_min")]
    pub history_min: usize,
    #[serde(default = "default_history_max")]
    pub history_max: usize,
    #[serde(default = "default_scale")]
    pub logit_scale: f64,
    #[serde(default = "default_bias")]
    pub logit_bias: f64,
}

fn default_candidates() -> usize {
    8
}
fn default_history_min() -> usize {
    10
}
fn default_history_max() -> usize {
    20
}
fn default_scale() -> f64 {
    10.0
}
fn default_bias() -> f64 {
    -5.0
}

impl SyntheticSpec {
    pub fn new(click_rule: ClickRule, seed: u64) -> Self {
        Self {
            n_users: 50,
            n_articles: 200,
            n_impressions: 2000,
            embed_dim: 16,
            topic_count: 8,
            seed,
            click_rule,
            candidates_per_impression: default_candidates(),
            history_min: default_history_min(),
            history_max: default_history_max(),
            logit_scale: default_scale(),
            logit_bias: default_bias(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_articles", self.n_articles),
            ("n_impressions", self.n_impressions),
            ("embed_dim", self.embed_dim),
            ("topic_count", self.topic_count),
            ("candidates_per_impression", self.candidates_per_impression),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synthetic {name} must be at least 1")));
            }
        }
        if self.history_min > self.history_max {
            return Err(Error::Config("history_min exceeds history_max".into()));
        }
        if self.candidates_per_impression > self.n_articles {
            return Err(Error::Config(
                "candidates_per_impression exceeds n_articles".into(),
            ));
        }
        if !self.logit_scale.is_finite() || !self.logit_bias.is_finite() {
            return Err(Error::Config("logit scale and bias must be finite".into()));
        }
        Ok(())
    }
}

/// What generated the labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub rule: ClickRule,
    pub article_topics: Vec<usize>,
    pub user_ids: Vec<String>,
    /// Planted-bilinear only: user latent vectors, one row per user.
    pub user_vectors: Option<Matrix>,
    /// Planted-bilinear only: latent vector per topic (articles inherit their topic's vector).
    pub topic_vectors: Option<Matrix>,
    pub interaction: Option<Matrix>,
    /// Topic-affinity / mixed-flow: each user's long-term topics.
    pub user_topics: Vec<Vec<usize>>,
    /// Mixed-flow only: the short-lived topic of each impression.
    pub current_topics: Vec<Option<usize>>,
    /// Exact click probability used for each candidate of each impression.
    pub candidate_probabilities: Vec<Vec<f64>>,
    pub logit_scale: f64,
    pub logit_bias: f64,
}

impl PlantedTruth {
    /// Mean click probability over every (user, article) pair, the expected
    /// positive rate when impression users and candidates are drawn uniformly.
    pub fn analytic_positive_rate(&self) -> f64 {
        let n_users = self.user_ids.len();
        let n_articles = self.article_topics.len();
        let mut total = 0.0;
        for u in 0..n_users {
            for a in 0..n_articles {
                total += self.pair_probability(u, a);
            }
        }
        total / (n_users * n_articles) as f64
    }

    /// Context-free click probability of user `u` on article `a`. For the
    /// mixed-flow rule the short-lived interest is ignored.
    pub fn pair_probability(&self, u: usize, a: usize) -> f64 {
        let topic = self.article_topics[a];
        match self.rule {
            ClickRule::PlantedBilinear => {
                let (users, topics, m) = (
                    self.user_vectors.as_ref().expect("bilinear truth"),
                    self.topic_vectors.as_ref().expect("bilinear truth"),
                    self.interaction.as_ref().expect("bilinear truth"),
                );
                let mv = m.matvec(topics.row(topic));
                let s = crate::linalg::dot(users.row(u), &mv);
                sigmoid(self.logit_scale * s + self.logit_bias)
            }
            ClickRule::TopicAffinity | ClickRule::MixedFlow => {
                let liked = self.user_topics[u].contains(&topic);
                sigmoid(self.logit_scale * f64::from(u8::from(liked)) + self.logit_bias)
            }
        }
    }
}

const STOPWORDS_IN_TEXT: &[&str] = &["the", "a", "of", "and", "to", "in", "on", "for", "with"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "to", "sa", "vi", "dor", "pel", "qua", "zi", "nor", "bel", "tas", "fen", "gu",
    "hir", "jo", "kel", "mun", "ox", "pra", "sil", "tum", "ur", "vex", "wal", "yor",
];

struct Lexicon {
    topics: Vec<Vec<String>>,
    filler: Vec<String>,
}

impl Lexicon {
    fn new(topic_count: usize, words_per_topic: usize, filler: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut used = BTreeSet::new();
        let mut word = |rng: &mut ChaCha8Rng| loop {
            let n = rng.random_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if !STOPWORDS_IN_TEXT.contains(&w.as_str()) && used.insert(w.clone()) {
                return w;
            }
        };
        let topics = (0..topic_count)
            .map(|_| (0..words_per_topic).map(|_| word(rng)).collect())
            .collect();
        let filler = (0..filler).map(|_| word(rng)).collect();
        Lexicon { topics, filler }
    }

    fn title(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let mut words: Vec<&str> = self.topics[topic]
            .choose_multiple(rng, 4)
            .map(String::as_str)
            .collect();
        words.push(self.filler.choose(rng).unwrap());
        words.shuffle(rng);
        let mut title = words.join(" ");
        if let Some(first) = title.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        title
    }

    fn body(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let sentences = rng.random_range(4..=8);
        (0..sentences)
            .map(|_| {
                let len = rng.random_range(8..=14);
                let words: Vec<&str> = (0..len)
                    .map(|_| {
                        let r: f64 = rng.random();
                        if r < 0.45 {
                            self.topics[topic].choose(rng).unwrap().as_str()
                        } else if r < 0.8 {
                            self.filler.choose(rng).unwrap().as_str()
                        } else {
                            STOPWORDS_IN_TEXT.choose(rng).unwrap()
                        }
                    })
                    .collect();
                let mut s = words.join(" ");
                if let Some(first) = s.get_mut(0..1) {
                    first.make_ascii_uppercase();
                }
                s.push('.');
                s
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const DEPARTMENTS: &[&str] = &["search", "infra", "security", "data", "mobile"];

/// Generated dataset plus the rule that labelled it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: PlantedTruth,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lexicon = Lexicon::new(spec.topic_count, 8, 40, &mut rng);

    let mixed = spec.click_rule == ClickRule::MixedFlow;
    let mut articles = Vec::with_capacity(spec.n_articles);
    let mut article_topics = Vec::with_capacity(spec.n_articles);
    let mut fresh = Vec::with_capacity(spec.n_articles);
    for i in 0..spec.n_articles {
        // Round-robin topics keep every topic populated.
        let topic = i % spec.topic_count;
        let is_fresh = mixed && rng.random_bool(0.4);
        let mut attributes = BTreeMap::new();
        attributes.insert("category".to_string(), format!("c{topic}"));
        attributes.insert(
            "department".to_string(),
            DEPARTMENTS.choose(&mut rng).unwrap().to_string(),
        );
        if mixed {
            let tag = if is_fresh { "fresh" } else { "archive" };
            attributes.insert("freshness".to_string(), tag.to_string());
        }
        articles.push(Article {
            id: format!("A{i:05}"),
            title: lexicon.title(topic, &mut rng),
            body: lexicon.body(topic, &mut rng),
            summary: None,
            attributes,
        });
        article_topics.push(topic);
        fresh.push(is_fresh);
    }
    let user_ids: Vec<String> = (0..spec.n_users).map(|u| format!("U{u:04}")).collect();

    let mut truth = PlantedTruth {
        rule: spec.click_rule,
        article_topics: article_topics.clone(),
        user_ids: user_ids.clone(),
        user_vectors: None,
        topic_vectors: None,
        interaction: None,
        user_topics: Vec::new(),
        current_topics: Vec::new(),
        candidate_probabilities: Vec::with_capacity(spec.n_impressions),
        logit_scale: spec.logit_scale,
        logit_bias: spec.logit_bias,
    };

    match spec.click_rule {
        ClickRule::PlantedBilinear => {
            let d = spec.embed_dim;
            let scale = 1.0 / (d as f64).sqrt();
            let gauss = |rows: usize, cols: usize, s: f64, rng: &mut ChaCha8Rng| {
                let data = (0..rows * cols)
                    .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                Matrix::from_vec(rows, cols, data)
            };
            truth.topic_vectors = Some(gauss(spec.topic_count, d, scale, &mut rng));
            truth.interaction = Some(gauss(d, d, 1.0, &mut rng));
            truth.user_vectors = Some(gauss(spec.n_users, d, scale, &mut rng));
        }
        ClickRule::TopicAffinity | ClickRule::MixedFlow => {
            let k = spec.topic_count;
            truth.user_topics = (0..spec.n_users)
                .map(|u| {
                    let first = u % k;
                    let second = (first + 1 + (u / k) % k.saturating_sub(1).max(1)) % k;
                    if first == second {
                        vec![first]
                    } else {
                        vec![first, second]
                    }
                })
                .collect();
        }
    }

    // Long-term history per user: clicked articles drawn from the user's
    // click distribution (archive articles only under the mixed rule). Under
    // the mixed rule users also made one stray click in every other topic,
    // so topic presence alone does not reveal preference; frequency does.
    let histories: Vec<Vec<usize>> = (0..spec.n_users)
        .map(|u| {
            let len = rng.random_range(spec.history_min..=spec.history_max);
            let pool: Vec<usize> = (0..spec.n_articles).filter(|&a| !mixed || !fresh[a]).collect();
            let weighted: Vec<(usize, f64)> =
                pool.iter().map(|&a| (a, truth.pair_probability(u, a))).collect();
            let mut history = weighted_sample_without_replacement(&weighted, len, &mut rng);
            if mixed {
                for t in (0..spec.topic_count).filter(|t| !truth.user_topics[u].contains(t)) {
                    let stray: Vec<usize> = pool
                        .iter()
                        .copied()
                        .filter(|&a| article_topics[a] == t && !history.contains(&a))
                        .collect();
                    history.extend(stray.choose(&mut rng));
                }
                history.shuffle(&mut rng);
            }
            history
        })
        .collect();

    let fresh_by_topic: Vec<Vec<usize>> = (0..spec.topic_count)
        .map(|t| {
            (0..spec.n_articles)
                .filter(|&a| fresh[a] && article_topics[a] == t)
                .collect()
        })
        .collect();

    let mut impressions = Vec::with_capacity(spec.n_impressions);
    for i in 0..spec.n_impressions {
        let u = rng.random_range(0..spec.n_users);
        let mut history = histories[u].clone();
        let (candidates, probs, current) = if mixed {
            let liked = &truth.user_topics[u];
            let options: Vec<usize> = (0..spec.topic_count)
                .filter(|t| !liked.contains(t) && !fresh_by_topic[*t].is_empty())
                .collect();
            let current = options.choose(&mut rng).copied();
            if let Some(c) = current {
                let recent: Vec<usize> = fresh_by_topic[c].choose_multiple(&mut rng, 2).copied().collect();
                history.extend(&recent);
            }
            let in_history: BTreeSet<usize> = history.iter().copied().collect();
            let pool: Vec<usize> = (0..spec.n_articles)
                .filter(|&a| fresh[a] && !in_history.contains(&a))
                .collect();
            let mut chosen = Vec::new();
            // Stratify so every impression can exercise both rule branches.
            let take =
                |pred: &dyn Fn(usize) -> bool, n: usize, chosen: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
                    let eligible: Vec<usize> = pool
                        .iter()
                        .copied()
                        .filter(|&a| pred(a) && !chosen.contains(&a))
                        .collect();
                    chosen.extend(eligible.choose_multiple(rng, n));
                };
            take(&|a| Some(article_topics[a]) == current, 2, &mut chosen, &mut rng);
            take(&|a| liked.contains(&article_topics[a]), 2, &mut chosen, &mut rng);
            let rest = spec.candidates_per_impression.saturating_sub(chosen.len());
            take(&|_| true, rest, &mut chosen, &mut rng);
            chosen.shuffle(&mut rng);
            let probs = chosen
                .iter()
                .map(|&a| {
                    let t = article_topics[a];
                    let z = spec.logit_scale
                        * (f64::from(u8::from(liked.contains(&t))) + f64::from(u8::from(Some(t) == current)))
                        + spec.logit_bias;
                    sigmoid(z)
                })
                .collect::<Vec<_>>();
            (chosen, probs, current)
        } else {
            let chosen: Vec<usize> =
                rand::seq::index::sample(&mut rng, spec.n_articles, spec.candidates_per_impression)
                    .into_vec();
            let probs = chosen.iter().map(|&a| truth.pair_probability(u, a)).collect();
            (chosen, probs, None)
        };
        let labelled = candidates
            .iter()
            .zip(&probs)
            .map(|(&a, &p)| {
                let draw: f64 = rng.random();
                (articles[a].id.clone(), u8::from(p > draw))
            })
            .collect();
        impressions.push(Impression {
            id: format!("I{i:06}"),
            user: user_ids[u].clone(),
            timestamp: 1_700_000_000 + 60 * i as i64,
            history: history.iter().map(|&a| articles[a].id.clone()).collect(),
            candidates: labelled,
        });
        truth.candidate_probabilities.push(probs);
        truth.current_topics.push(current);
    }

    Ok(Synthetic {
        dataset: Dataset {
            corpus: Corpus::new(articles)?,
            impressions,
            users: BTreeMap::new(),
        },
        truth,
    })
}

/// Sequential weighted draws without replacement.
fn weighted_sample_without_replacement(items: &[(usize, f64)], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool = items.to_vec();
    let mut out = Vec::with_capacity(n.min(pool.len()));
    while out.len() < n && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let idx = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut pick = pool.len() - 1;
            for (j, (_, w)) in pool.iter().enumerate() {
                if x < *w {
                    pick = j;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            rng.random_range(0..pool.len())
        };
        out.push(pool.swap_remove(idx).0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_topic_shares_category() {
        let mut spec = SyntheticSpec::new(ClickRule::PlantedBilinear, 3);
        spec.topic_count = 1;
        spec.n_impressions = 10;
        let s = generate_synthetic(&spec).unwrap();
        assert!(s
            .dataset
            .corpus
            .articles()
            .iter()
            .all(|a| a.category() == Some("c0")));
    }

    #[test]
    fn zero_counts_are_rejected() {
        let mut spec = SyntheticSpec::new(ClickRule::TopicAffinity, 1);
        spec.n_users = 0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn topic_affinity_is_balanced() {
        let spec = SyntheticSpec::new(ClickRule::TopicAffinity, 5);
        let s = generate_synthetic(&spec).unwrap();
        let mut counts = vec![0usize; spec.topic_count];
        for topics in &s.truth.user_topics {
            for &t in topics {
                counts[t] += 1;
            }
        }
        let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(max - min <= 2, "{counts:?}");
    }

    #[test]
    fn mixed_flow_appends_fresh_recent_articles() {
        let mut spec = SyntheticSpec::new(ClickRule::MixedFlow, 9);
        spec.n_impressions = 20;
        let s = generate_synthetic(&spec).unwrap();
        for (imp, current) in s.dataset.impressions.iter().zip(&s.truth.current_topics) {
            let current = current.expect("current topic");
            for id in &imp.history[imp.history.len() - 2..] {
                let a = s.dataset.corpus.get(id).unwrap();
                assert_eq!(a.attributes["freshness"], "fresh");
                assert_eq!(a.category(), Some(format!("c{current}").as_str()));
            }
            for (id, _) in &imp.candidates {
                assert_eq!(s.dataset.corpus.get(id).unwrap().attributes["freshness"], "fresh");
            }
        }
    }
}
