//! Shared setup for the benchmarks: a trained-shape model over a synthetic
//! corpus, with its serving store.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewflow::data::{generate_synthetic, ClickRule, Dataset, SyntheticSpec};
use viewflow::encoder::{AttributeSchema, AttributeSpec, EncoderDims, HashedEmbedder};
use viewflow::model::checkpoint::version_tag;
use viewflow::pipeline::{build_profiles, summarize_articles, Prepared};
use viewflow::serving::precompute;
use viewflow::summarizer::{PromptTemplate, StubClient, Summarizer, SummaryCache};
use viewflow::{AblationFlags, Model, ModelConfig, ProfileBook, Serving};

pub struct Bench {
    pub dataset: Dataset,
    pub profiles: ProfileBook,
    pub embedder: HashedEmbedder,
    pub model: Model,
    pub prepared: Prepared,
    pub serving: Serving,
}

pub fn setup() -> Bench {
    let mut dataset = generate_synthetic(&SyntheticSpec::new(ClickRule::MixedFlow, 1))
        .expect("synthetic spec")
        .dataset;
    let s = Summarizer::new(Arc::new(StubClient::default()), SummaryCache::in_memory());
    summarize_articles(&s, &mut dataset, PromptTemplate::ArticleSummaryMind);
    let (profiles, _) = build_profiles(&s, &dataset, PromptTemplate::UserProfileMind);
    let specs = ["category", "department", "freshness"].map(AttributeSpec::categorical);
    let schema = AttributeSchema::fit(specs.to_vec(), dataset.corpus.articles());
    let embedder = HashedEmbedder::new(128).expect("embed dim");
    let config = ModelConfig {
        dims: EncoderDims {
            embed: 128,
            proj: 16,
            attr_embed: 8,
            attr_hidden: 16,
            attr_out: 8,
        },
        flags: AblationFlags::default(),
        batch_norm: true,
    };
    let model = Model::new(config, schema.clone(), &mut ChaCha8Rng::seed_from_u64(1)).expect("model");
    let prepared =
        Prepared::build(&dataset, &schema, &embedder, &model.config.flags, &profiles).expect("prepare");
    let version = version_tag(&model.to_bytes().expect("serialize"));
    let store = precompute(&model, &version, &dataset, &embedder, &profiles).expect("precompute");
    let serving = Serving::new(model.clone(), version, store).expect("serving");
    Bench {
        dataset,
        profiles,
        embedder,
        model,
        prepared,
        serving,
    }
}
