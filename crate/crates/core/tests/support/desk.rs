//! Desk-scale synthetic setup shared by the training tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewflow::data::{generate_synthetic, ClickRule, Dataset, SyntheticSpec};
use viewflow::encoder::{AttributeSchema, AttributeSpec, EncoderDims, HashedEmbedder};
use viewflow::model::{AblationFlags, Model, ModelConfig};
use viewflow::pipeline::{build_profiles, summarize_articles, Prepared};
use viewflow::summarizer::{PromptTemplate, StubClient, Summarizer, SummaryCache};
use viewflow::training::{Split, TrainConfig};
use viewflow::ProfileBook;

pub const DIMS: EncoderDims = EncoderDims {
    embed: 128,
    proj: 16,
    attr_embed: 8,
    attr_hidden: 16,
    attr_out: 8,
};

pub struct Desk {
    pub dataset: Dataset,
    pub profiles: ProfileBook,
    pub schema: AttributeSchema,
    pub embedder: HashedEmbedder,
    pub config: ModelConfig,
    pub prepared: Prepared,
}

impl Desk {
    /// Synthetic corpus with stub summaries and profiles.
    pub fn new(rule: ClickRule, seed: u64, flags: AblationFlags) -> Self {
        let mut dataset = generate_synthetic(&SyntheticSpec::new(rule, seed))
            .unwrap()
            .dataset;
        let s = Summarizer::new(Arc::new(StubClient::default()), SummaryCache::in_memory());
        assert!(summarize_articles(&s, &mut dataset, PromptTemplate::ArticleSummaryMind).is_empty());
        let (profiles, failed) = build_profiles(&s, &dataset, PromptTemplate::UserProfileMind);
        assert!(failed.is_empty());
        let specs = ["category", "department", "freshness"]
            .map(AttributeSpec::categorical)
            .to_vec();
        let schema = AttributeSchema::fit(specs, dataset.corpus.articles());
        let embedder = HashedEmbedder::new(DIMS.embed).unwrap();
        let config = ModelConfig {
            dims: DIMS,
            flags,
            batch_norm: true,
        };
        let prepared = Prepared::build(&dataset, &schema, &embedder, &flags, &profiles).unwrap();
        Self {
            dataset,
            profiles,
            schema,
            embedder,
            config,
            prepared,
        }
    }

    pub fn model(&self, seed: u64) -> Model {
        Model::new(
            self.config,
            self.schema.clone(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    /// Last 20% by time held out for testing; the rest split 15:1 into
    /// train and validation.
    pub fn held_out(&self) -> (Split, Vec<usize>) {
        let outer = Split::by_time(&self.prepared, 0.2);
        let n_val = outer.train.len() / 16;
        let cut = outer.train.len() - n_val;
        (
            Split {
                train: outer.train[..cut].to_vec(),
                val: outer.train[cut..].to_vec(),
            },
            outer.val,
        )
    }
}

pub fn train_config(seed: u64, max_steps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 64,
        dropout: 0.1,
        max_steps,
        patience: 100,
        eval_every: 200,
        seed,
        ..Default::default()
    }
}

/// Probabilities through the evaluation path (Prepared reps + score_reps)
/// for `user`'s latest impression context and arbitrary candidates.
pub fn eval_path(
    desk: &Desk,
    model: &Model,
    reps: &[Vec<f64>],
    user: &str,
    candidates: &[usize],
) -> Vec<f64> {
    let imp = desk
        .prepared
        .impressions
        .iter()
        .filter(|i| i.user == user)
        .max_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    let (history, profile): (Vec<&[f64]>, Option<&[f64]>) = match imp {
        Some(i) => (
            i.history.iter().map(|&h| reps[h].as_slice()).collect(),
            i.profile.map(|p| desk.prepared.profiles[p].as_slice()),
        ),
        None => (Vec::new(), None),
    };
    let cands: Vec<(&str, &[f64])> = candidates
        .iter()
        .map(|&c| (desk.prepared.article_ids[c].as_str(), reps[c].as_slice()))
        .collect();
    model
        .score_reps(&history, profile, &cands)
        .unwrap()
        .into_iter()
        .map(|s| s.probability)
        .collect()
}
