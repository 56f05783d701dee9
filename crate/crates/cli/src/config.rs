//! Declarative run configuration (TOML). Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! format = "jsonl"            # or "mind"
//! path = "data/dataset.jsonl"
//! attributes = [{ name = "category" }, { name = "views", buckets = [10.0, 100.0] }]
//!
//! [model.dims]
//! embed = 128
//! proj = 16
//! attr_embed = 8
//! attr_hidden = 16
//! attr_out = 8
//!
//! [model.flags]
//! instant_flow = true
//!
//! [train]
//! learning_rate = 0.01
//! batch_size = 64
//! max_steps = 2000
//!
//! [summarizer]
//! client = "stub"             # "replay" (with replay_path) or "remote"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use viewflow::data::{ClickRule, SyntheticSpec};
use viewflow::encoder::AttributeSpec;
use viewflow::summarizer::{
    CompletionClient, PromptTemplate, RemoteClient, ReplayClient, StubClient, Summarizer, SummaryCache,
};
use viewflow::{Error, ModelConfig, Result, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds model initialization, training and synthetic generation.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub summarizer: SummarizerConfig,
    pub synth: SynthConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Jsonl,
    Mind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DataFormat,
    /// Canonical JSONL dataset.
    pub path: Option<PathBuf>,
    /// MIND `news.tsv` and `behaviors.tsv`.
    pub news: Option<PathBuf>,
    pub behaviors: Option<PathBuf>,
    /// Attribute columns; every attribute key found in the corpus when empty.
    pub attributes: Vec<AttributeSpec>,
    pub profiles: Option<PathBuf>,
    /// Precomputed text embeddings; the hashed embedder is used otherwise.
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Stub,
    Replay,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizerConfig {
    pub client: ClientKind,
    pub replay_path: Option<PathBuf>,
    /// Stub client word budget for article summaries.
    pub summary_budget: usize,
    pub profile_terms: usize,
    pub article_template: PromptTemplate,
    pub profile_template: PromptTemplate,
    pub max_in_flight: usize,
    pub retries: usize,
    pub profile_with_summaries: bool,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        let stub = StubClient::default();
        Self {
            client: ClientKind::Stub,
            replay_path: None,
            summary_budget: stub.summary_budget,
            profile_terms: stub.profile_terms,
            article_template: PromptTemplate::ArticleSummaryMind,
            profile_template: PromptTemplate::UserProfileMind,
            max_in_flight: 4,
            retries: 3,
            profile_with_summaries: false,
        }
    }
}

impl SummarizerConfig {
    pub fn build(&self, cache_path: &Path) -> Result<Summarizer> {
        let client: Arc<dyn CompletionClient> = match self.client {
            ClientKind::Stub => Arc::new(StubClient {
                summary_budget: self.summary_budget,
                profile_terms: self.profile_terms,
            }),
            ClientKind::Replay => {
                let path = self.replay_path.as_ref().ok_or_else(|| {
                    Error::Config("summarizer.replay_path is required for the replay client".into())
                })?;
                Arc::new(ReplayClient::from_file(path)?)
            }
            ClientKind::Remote => Arc::new(RemoteClient::from_env()?),
        };
        let mut s = Summarizer::new(client, SummaryCache::open(cache_path)?)
            .with_retries(self.retries)
            .with_max_in_flight(self.max_in_flight);
        s.profile_with_summaries = self.profile_with_summaries;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub rule: ClickRule,
    pub users: usize,
    pub articles: usize,
    pub impressions: usize,
    pub topics: usize,
    pub latent_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = SyntheticSpec::new(ClickRule::PlantedBilinear, 0);
        Self {
            rule: s.click_rule,
            users: s.n_users,
            articles: s.n_articles,
            impressions: s.n_impressions,
            topics: s.topic_count,
            latent_dim: s.embed_dim,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        let mut s = SyntheticSpec::new(self.rule, seed);
        s.n_users = self.users;
        s.n_articles = self.articles;
        s.n_impressions = self.impressions;
        s.topic_count = self.topics;
        s.embed_dim = self.latent_dim;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub addr: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.summarizer.summary_budget == 0 {
            return Err(Error::Config("summarizer.summary_budget must be positive".into()));
        }
        if !self.summarizer.article_template.is_article_template()
            || self.summarizer.profile_template.is_article_template()
        {
            return Err(Error::Config(
                "article_template must be an article template and profile_template a profile template".into(),
            ));
        }
        self.synth.spec(self.seed).validate()
    }
}
