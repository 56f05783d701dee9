//! Offline precompute of article representations and user profiles.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::data::{Article, Dataset, Impression};
use crate::encoder::TextEmbedder;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pipeline::{embed_profile, profile_text, ArticleFeatures, ProfileBook};
use crate::tensorio::{BinReader, BinWriter, DType};

pub const STORE_MAGIC: &[u8; 8] = b"VFSTORE1";
pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct UserEntry {
    /// History the profile was written from, oldest first.
    pub history: Vec<String>,
    pub profile_text: Option<String>,
    pub profile_embedding: Option<Vec<f64>>,
}

/// Precomputed representations tagged with the checkpoint that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RepStore {
    pub version: String,
    pub rep_dim: usize,
    pub articles: BTreeMap<String, Vec<f64>>,
    pub users: BTreeMap<String, UserEntry>,
    /// Items that could not be fully prepared; non-empty means the store is partial.
    pub issues: Vec<String>,
}

impl RepStore {
    pub fn empty(version: impl Into<String>, rep_dim: usize) -> Self {
        Self {
            version: version.into(),
            rep_dim,
            articles: BTreeMap::new(),
            users: BTreeMap::new(),
            issues: Vec::new(),
        }
    }

    pub fn is_partial(&self) -> bool {
        !self.issues.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = BinWriter::new(Vec::new());
        w.header(STORE_MAGIC, STORE_FORMAT_VERSION)?;
        w.str(&self.version)?;
        w.u32(self.rep_dim as u32)?;
        w.u64(self.articles.len() as u64)?;
        for (id, rep) in &self.articles {
            w.tensor(id, &[rep.len()], rep, DType::F64)?;
        }
        w.u64(self.users.len() as u64)?;
        for (id, u) in &self.users {
            w.str(id)?;
            w.u32(u.history.len() as u32)?;
            for h in &u.history {
                w.str(h)?;
            }
            match &u.profile_text {
                Some(t) => {
                    w.u8(1)?;
                    w.str(t)?;
                }
                None => w.u8(0)?,
            }
            match &u.profile_embedding {
                Some(e) => {
                    w.u8(1)?;
                    w.tensor("profile", &[e.len()], e, DType::F64)?;
                }
                None => w.u8(0)?,
            }
        }
        w.u32(self.issues.len() as u32)?;
        for i in &self.issues {
            w.str(i)?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(Cursor::new(bytes));
        let v = r.header(STORE_MAGIC)?;
        if v != STORE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported store format version {v}")));
        }
        let version = r.str()?;
        let rep_dim = r.u32()? as usize;
        let mut store = Self::empty(version, rep_dim);
        for _ in 0..r.u64()? {
            let t = r.tensor()?;
            if t.data.len() != rep_dim {
                return Err(Error::Format(format!(
                    "article `{}` has width {}, store declares {rep_dim}",
                    t.name,
                    t.data.len()
                )));
            }
            store.articles.insert(t.name, t.data);
        }
        for _ in 0..r.u64()? {
            let id = r.str()?;
            let history = (0..r.u32()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            let profile_text = match r.u8()? {
                0 => None,
                _ => Some(r.str()?),
            };
            let profile_embedding = match r.u8()? {
                0 => None,
                _ => Some(r.tensor()?.data),
            };
            store.users.insert(
                id,
                UserEntry {
                    history,
                    profile_text,
                    profile_embedding,
                },
            );
        }
        store.issues = (0..r.u32()?).map(|_| r.str()).collect::<Result<_>>()?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Each user's most recent impression (by timestamp, then id).
fn latest_impressions(impressions: &[Impression]) -> BTreeMap<&str, &Impression> {
    let mut out: BTreeMap<&str, &Impression> = BTreeMap::new();
    for imp in impressions {
        let e = out.entry(imp.user.as_str()).or_insert(imp);
        if (imp.timestamp, &imp.id) > (e.timestamp, &e.id) {
            *e = imp;
        }
    }
    out
}

/// Encodes every article and builds every user's profile entry with `model`.
///
/// Users take the history of their latest impression. Articles without a
/// summary (when summaries are enabled) fall back to the raw body and users
/// without a profile are stored without one; both are listed in `issues`.
pub fn precompute(
    model: &Model,
    version: &str,
    dataset: &Dataset,
    embedder: &dyn TextEmbedder,
    profiles: &ProfileBook,
) -> Result<RepStore> {
    let flags = model.config.flags;
    let mut store = RepStore::empty(version, model.rep_dim());
    let articles = dataset.corpus.articles();
    let features = articles
        .iter()
        .map(|a| {
            if flags.use_summaries && a.summary.is_none() {
                store.issues.push(format!("article {}: no summary", a.id));
            }
            ArticleFeatures::build(a, &model.schema, embedder, flags.use_summaries)
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<_> = features.iter().map(ArticleFeatures::input).collect();
    for (a, rep) in articles.iter().zip(model.encode(&inputs)) {
        store.articles.insert(a.id.clone(), rep.h);
    }

    for (user, imp) in latest_impressions(&dataset.impressions) {
        let history: Vec<&Article> = imp
            .history
            .iter()
            .map(|h| {
                dataset
                    .corpus
                    .get(h)
                    .ok_or_else(|| Error::UnknownArticle(h.clone()))
            })
            .collect::<Result<_>>()?;
        let text = if flags.constant_flow {
            match profile_text(&flags, profiles, user, &imp.history, &history) {
                Ok(t) => t,
                Err(e) => {
                    store.issues.push(format!("user {user}: {e}"));
                    None
                }
            }
        } else {
            None
        };
        let profile_embedding = match &text {
            Some(t) => Some(embed_profile(embedder, &flags, user, &imp.history, t)?),
            None => None,
        };
        store.users.insert(
            user.to_string(),
            UserEntry {
                history: imp.history.clone(),
                profile_text: text,
                profile_embedding,
            },
        );
    }
    Ok(store)
}
