//! Two-flow news recommender: candidate-aware attention over recent clicks
//! (instant flow) combined with a gate from an LLM-written reader profile
//! (constant flow).
//!
//! The crate covers the whole pipeline: dataset ingestion, LLM summarization
//! with caching, frozen text embedding, the scoring network with hand-written
//! gradients, training, ranking metrics and an online rerank service.

pub mod data;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod serving;
pub mod summarizer;
pub mod tensorio;
pub mod text;
pub mod training;

pub use data::{Article, Dataset, Impression, UserInfo};
pub use encoder::{EncoderDims, HashedEmbedder, TextEmbedder};
pub use error::{Error, Result};
pub use metrics::{EvalReport, RankedImpression};
pub use model::{AblationFlags, Model, ModelConfig, ScoredCandidate};
pub use pipeline::{Prepared, ProfileBook};
pub use serving::{RankRequest, RankResponse, RepStore, Serving};
pub use training::{TrainConfig, TrainOutcome};
