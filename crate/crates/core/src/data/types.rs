use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One article: title, raw body, optional LLM summary and categorical attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl Article {
    pub fn category(&self) -> Option<&str> {
        self.attributes.get("category").map(String::as_str)
    }

    /// Body text the encoder should embed: the summary when requested and present.
    pub fn body_text(&self, prefer_summary: bool) -> &str {
        match (&self.summary, prefer_summary) {
            (Some(s), true) => s,
            _ => &self.body,
        }
    }
}

/// One recommendation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    pub id: String,
    pub user: String,
    pub timestamp: i64,
    /// Clicked articles, oldest first.
    pub history: Vec<String>,
    pub candidates: Vec<(String, u8)>,
}

/// User-level attributes (position, organization, skill, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserInfo {
    pub id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// A record-level parse failure; parsing continues past it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl From<RecordError> for Error {
    fn from(e: RecordError) -> Self {
        Error::Record {
            line: e.line,
            message: e.message,
        }
    }
}

/// Output of a tolerant parser.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
    /// Non-blank input lines seen.
    pub lines: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            errors: Vec::new(),
            lines: 0,
        }
    }
}

impl<T> Parsed<T> {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

/// An article collection indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(articles: Vec<Article>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for a in articles {
            corpus.insert(a)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, article: Article) -> Result<()> {
        if article.id.is_empty() {
            return Err(Error::Invalid("article id is empty".into()));
        }
        if self.index.contains_key(&article.id) {
            return Err(Error::DuplicateArticle(article.id));
        }
        self.index.insert(article.id.clone(), self.articles.len());
        self.articles.push(article);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn articles_mut(&mut self) -> &mut [Article] {
        &mut self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// Checks that every history and candidate id resolves.
    pub fn check_impressions(&self, impressions: &[Impression]) -> Result<()> {
        for imp in impressions {
            for id in imp.history.iter().chain(imp.candidates.iter().map(|(c, _)| c)) {
                if !self.index.contains_key(id) {
                    return Err(Error::UnknownArticle(id.clone()));
                }
            }
        }
        Ok(())
    }
}

/// A full dataset: corpus, impressions, and optional user attributes.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub corpus: Corpus,
    pub impressions: Vec<Impression>,
    pub users: BTreeMap<String, UserInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub articles: usize,
    pub impressions: usize,
    pub candidates: usize,
    pub positives: usize,
}

impl Dataset {
    pub fn stats(&self) -> DatasetStats {
        let users: std::collections::BTreeSet<&str> =
            self.impressions.iter().map(|i| i.user.as_str()).collect();
        let candidates = self.impressions.iter().map(|i| i.candidates.len()).sum();
        let positives = self
            .impressions
            .iter()
            .flat_map(|i| &i.candidates)
            .filter(|(_, y)| *y == 1)
            .count();
        DatasetStats {
            users: users.len(),
            articles: self.corpus.len(),
            impressions: self.impressions.len(),
            candidates,
            positives,
        }
    }
}
