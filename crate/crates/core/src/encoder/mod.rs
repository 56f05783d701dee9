//! Article encoding: frozen text embeddings, trainable projections and
//! attribute embeddings combined into one dense representation.

pub mod article;
pub mod attributes;
pub mod embedder;

pub use article::{
    backward_batch, encode_batch, ArticleInput, ArticleRep, EncodeMode, EncoderCache, EncoderDims,
    EncoderWeights, NormStats, TextSide,
};
pub use attributes::{AttributeSchema, AttributeSpec, Vocab};
pub use embedder::{EmbedItem, HashedEmbedder, PrecomputedEmbeddings, TextEmbedder};
