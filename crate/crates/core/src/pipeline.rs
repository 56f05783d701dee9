//! Dataset → model inputs: attribute indices, frozen text embeddings and
//! profile embeddings, indexed for batching.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Article, Dataset, Impression};
use crate::encoder::{ArticleInput, AttributeSchema, EmbedItem, TextEmbedder};
use crate::error::{Error, Result};
use crate::model::{AblationFlags, Model, ScoredCandidate};
use crate::summarizer::{profile_key, raw_profile_text, PromptTemplate, Summarizer};

/// Frozen inputs for one article.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleFeatures {
    pub attrs: Vec<usize>,
    pub title: Vec<f64>,
    pub body: Vec<f64>,
}

impl ArticleFeatures {
    pub fn build(
        article: &Article,
        schema: &AttributeSchema,
        embedder: &dyn TextEmbedder,
        use_summaries: bool,
    ) -> Result<Self> {
        let body_side = if use_summaries && article.summary.is_some() {
            "summary"
        } else {
            "body"
        };
        let title = embedder.embed(EmbedItem {
            key: &format!("{}#title", article.id),
            text: &article.title,
        })?;
        let body = embedder.embed(EmbedItem {
            key: &format!("{}#{body_side}", article.id),
            text: article.body_text(use_summaries),
        })?;
        Ok(Self {
            attrs: schema.encode(article),
            title,
            body,
        })
    }

    pub fn input(&self) -> ArticleInput<'_> {
        ArticleInput {
            attrs: &self.attrs,
            title: &self.title,
            body: &self.body,
        }
    }
}

/// One profile text per (user, history) pair, keyed by [`profile_key`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileBook {
    entries: BTreeMap<String, ProfileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub key: String,
    pub user: String,
    pub text: String,
}

impl ProfileBook {
    pub fn insert(&mut self, user: &str, history: &[String], text: String) {
        let key = profile_key(user, history);
        self.entries.insert(
            key.clone(),
            ProfileEntry {
                key,
                user: user.to_string(),
                text,
            },
        );
    }

    pub fn get(&self, user: &str, history: &[String]) -> Option<&str> {
        self.entries
            .get(&profile_key(user, history))
            .map(|e| e.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ProfileEntry> {
        self.entries.values()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for e in self.entries.values() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut book = Self::default();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ProfileEntry = serde_json::from_str(&line).map_err(|e| Error::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            book.entries.insert(e.key.clone(), e);
        }
        Ok(book)
    }
}

/// Fills `summary` on every article. Articles that fail keep no summary and
/// are reported by id.
pub fn summarize_articles(
    summarizer: &Summarizer,
    dataset: &mut Dataset,
    template: PromptTemplate,
) -> Vec<(String, Error)> {
    let pending: Vec<Article> = dataset.corpus.articles().to_vec();
    let refs: Vec<&Article> = pending.iter().collect();
    let results = summarizer.summarize_many(&refs, template);
    let mut failures = Vec::new();
    for (article, result) in dataset.corpus.articles_mut().iter_mut().zip(results) {
        match result {
            Ok(s) => article.summary = Some(s),
            Err(e) => failures.push((article.id.clone(), e)),
        }
    }
    failures
}

/// Writes one profile per distinct (user, history) pair with a non-empty history.
pub fn build_profiles(
    summarizer: &Summarizer,
    dataset: &Dataset,
    template: PromptTemplate,
) -> (ProfileBook, Vec<(String, Error)>) {
    let mut book = ProfileBook::default();
    let mut failures = Vec::new();
    let empty = BTreeMap::new();
    for imp in &dataset.impressions {
        if imp.history.is_empty() || book.get(&imp.user, &imp.history).is_some() {
            continue;
        }
        let history: Vec<&Article> = imp.history.iter().filter_map(|h| dataset.corpus.get(h)).collect();
        let attrs = dataset.users.get(&imp.user).map_or(&empty, |u| &u.attributes);
        match summarizer.summarize_user(&imp.user, &history, attrs, template) {
            Ok(text) => book.insert(&imp.user, &imp.history, text),
            Err(e) => failures.push((imp.user.clone(), e)),
        }
    }
    (book, failures)
}

/// Profile text for one history under the given flags; `None` for an empty
/// history (cold start).
pub fn profile_text(
    flags: &AblationFlags,
    profiles: &ProfileBook,
    user: &str,
    history_ids: &[String],
    history: &[&Article],
) -> Result<Option<String>> {
    if history.is_empty() {
        return Ok(None);
    }
    if !flags.use_instruct_u {
        return Ok(Some(raw_profile_text(history)));
    }
    profiles
        .get(user, history_ids)
        .map(|t| Some(t.to_string()))
        .ok_or_else(|| {
            Error::Invalid(format!(
                "no profile for user `{user}` with a {}-article history; run summarize first",
                history_ids.len()
            ))
        })
}

/// Embedding-table key of a profile text: `profile#<key>` for generated
/// profiles, `titles#<key>` for the raw-title fallback.
pub fn profile_embed_key(flags: &AblationFlags, user: &str, history_ids: &[String]) -> String {
    let prefix = if flags.use_instruct_u { "profile" } else { "titles" };
    format!("{prefix}#{}", profile_key(user, history_ids))
}

/// Embeds a profile text under its stable key.
pub fn embed_profile(
    embedder: &dyn TextEmbedder,
    flags: &AblationFlags,
    user: &str,
    history_ids: &[String],
    text: &str,
) -> Result<Vec<f64>> {
    embedder.embed(EmbedItem {
        key: &profile_embed_key(flags, user, history_ids),
        text,
    })
}

/// An impression with every reference resolved to an index.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImpression {
    pub id: String,
    pub user: String,
    pub timestamp: i64,
    pub history: Vec<usize>,
    pub profile: Option<usize>,
    pub candidates: Vec<(usize, u8)>,
}

/// Model-ready view of a dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub article_ids: Vec<String>,
    pub features: Vec<ArticleFeatures>,
    pub profiles: Vec<Vec<f64>>,
    pub impressions: Vec<PreparedImpression>,
}

impl Prepared {
    pub fn build(
        dataset: &Dataset,
        schema: &AttributeSchema,
        embedder: &dyn TextEmbedder,
        flags: &AblationFlags,
        profiles: &ProfileBook,
    ) -> Result<Self> {
        let articles = dataset.corpus.articles();
        let features = articles
            .iter()
            .map(|a| ArticleFeatures::build(a, schema, embedder, flags.use_summaries))
            .collect::<Result<Vec<_>>>()?;
        let mut profile_index: HashMap<String, usize> = HashMap::new();
        let mut profile_vecs = Vec::new();
        let mut impressions = Vec::with_capacity(dataset.impressions.len());
        for imp in &dataset.impressions {
            let p = prepare_impression(dataset, imp)?;
            let profile = if flags.constant_flow {
                let hist: Vec<&Article> = p.history.iter().map(|&i| &articles[i]).collect();
                match profile_text(flags, profiles, &imp.user, &imp.history, &hist)? {
                    None => None,
                    Some(text) => {
                        let key = profile_key(&imp.user, &imp.history);
                        Some(match profile_index.get(&key) {
                            Some(&i) => i,
                            None => {
                                let v = embed_profile(embedder, flags, &imp.user, &imp.history, &text)?;
                                profile_vecs.push(v);
                                profile_index.insert(key, profile_vecs.len() - 1);
                                profile_vecs.len() - 1
                            }
                        })
                    }
                }
            } else {
                None
            };
            impressions.push(PreparedImpression { profile, ..p });
        }
        Ok(Self {
            article_ids: articles.iter().map(|a| a.id.clone()).collect(),
            features,
            profiles: profile_vecs,
            impressions,
        })
    }

    /// Eval-mode representations for every article.
    pub fn encode_all(&self, model: &Model) -> Vec<Vec<f64>> {
        let inputs: Vec<ArticleInput<'_>> = self.features.iter().map(|f| f.input()).collect();
        model.encode(&inputs).into_iter().map(|r| r.h).collect()
    }

    /// Scores every candidate of the selected impressions through
    /// [`Model::score_reps`].
    pub fn score(
        &self,
        model: &Model,
        reps: &[Vec<f64>],
        which: &[usize],
    ) -> Result<Vec<Vec<ScoredCandidate>>> {
        which
            .iter()
            .map(|&k| {
                let imp = &self.impressions[k];
                let history: Vec<&[f64]> = imp.history.iter().map(|&i| reps[i].as_slice()).collect();
                let profile = imp.profile.map(|p| self.profiles[p].as_slice());
                let cands: Vec<(&str, &[f64])> = imp
                    .candidates
                    .iter()
                    .map(|&(i, _)| (self.article_ids[i].as_str(), reps[i].as_slice()))
                    .collect();
                model.score_reps(&history, profile, &cands)
            })
            .collect()
    }

    /// Scores and labels ready for the metrics module.
    pub fn ranked(&self, model: &Model, which: &[usize]) -> Result<Vec<crate::metrics::RankedImpression>> {
        let reps = self.encode_all(model);
        let scored = self.score(model, &reps, which)?;
        Ok(which
            .iter()
            .zip(scored)
            .map(|(&k, s)| {
                let imp = &self.impressions[k];
                crate::metrics::RankedImpression::new(
                    imp.id.clone(),
                    s.iter().map(|c| c.probability).collect(),
                    imp.candidates.iter().map(|c| c.1).collect(),
                )
            })
            .collect())
    }
}

fn prepare_impression(dataset: &Dataset, imp: &Impression) -> Result<PreparedImpression> {
    let pos = |id: &str| {
        dataset
            .corpus
            .position(id)
            .ok_or_else(|| Error::UnknownArticle(id.to_string()))
    };
    Ok(PreparedImpression {
        id: imp.id.clone(),
        user: imp.user.clone(),
        timestamp: imp.timestamp,
        history: imp.history.iter().map(|h| pos(h)).collect::<Result<_>>()?,
        profile: None,
        candidates: imp
            .candidates
            .iter()
            .map(|(c, y)| pos(c).map(|i| (i, *y)))
            .collect::<Result<_>>()?,
    })
}
