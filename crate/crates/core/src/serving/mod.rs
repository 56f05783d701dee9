//! Online reranking over a precomputed [`RepStore`].

pub mod http;
pub mod store;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use http::{router, serve, AppState};
pub use store::{precompute, RepStore, UserEntry};

use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    pub user_id: String,
    pub candidates: Vec<String>,
    /// Number of results to return; all candidates when absent.
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub article_id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub ranked: Vec<RankedItem>,
    pub model_version: String,
    pub latency_ms: f64,
}

/// A loaded checkpoint paired with the store it produced.
#[derive(Debug, Clone)]
pub struct Serving {
    pub model: Model,
    pub model_version: String,
    pub store: RepStore,
}

impl Serving {
    /// Refuses a store built by a different checkpoint.
    pub fn new(model: Model, model_version: String, store: RepStore) -> Result<Self> {
        if store.version != model_version {
            return Err(Error::VersionMismatch {
                store: store.version,
                checkpoint: model_version,
            });
        }
        if store.rep_dim != model.rep_dim() {
            return Err(Error::Dimension {
                context: "store representation",
                expected: model.rep_dim(),
                actual: store.rep_dim,
            });
        }
        Ok(Self {
            model,
            model_version,
            store,
        })
    }

    pub fn rank(&self, request: &RankRequest) -> Result<RankResponse> {
        let start = Instant::now();
        if self.store.version != self.model_version {
            return Err(Error::VersionMismatch {
                store: self.store.version.clone(),
                checkpoint: self.model_version.clone(),
            });
        }
        if request.candidates.is_empty() {
            return Err(Error::Invalid("request has no candidates".into()));
        }
        let lookup = |id: &String| {
            self.store
                .articles
                .get(id)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::UnknownArticle(id.clone()))
        };
        let candidates: Vec<(&str, &[f64])> = request
            .candidates
            .iter()
            .map(|id| lookup(id).map(|r| (id.as_str(), r)))
            .collect::<Result<_>>()?;
        // Unknown users are scored as cold starts.
        let (history, profile) = match self.store.users.get(&request.user_id) {
            Some(u) => (
                u.history.iter().map(lookup).collect::<Result<Vec<_>>>()?,
                u.profile_embedding.as_deref(),
            ),
            None => (Vec::new(), None),
        };
        let scored = self.model.score_reps(&history, profile, &candidates)?;
        let mut ranked: Vec<RankedItem> = scored
            .into_iter()
            .map(|c| RankedItem {
                article_id: c.article_id,
                probability: c.probability,
            })
            .collect();
        // Stable: equal probabilities keep request order.
        ranked.sort_by(|a, b| b.probability.total_cmp(&a.probability));
        if let Some(k) = request.top_k {
            ranked.truncate(k);
        }
        Ok(RankResponse {
            ranked,
            model_version: self.model_version.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}
