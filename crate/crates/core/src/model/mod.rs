//! The scoring network: instant-flow attention over the click history,
//! constant-flow gating by the user profile, and a logistic click head.

pub mod checkpoint;
pub mod flow;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::{
    encode_batch, ArticleInput, ArticleRep, AttributeSchema, EmbedItem, EncodeMode, EncoderDims,
    EncoderWeights, NormStats, TextEmbedder, TextSide,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use flow::{attention_weights, constant_rep, gate_vector, instant_rep, ExampleForward};

/// Architectural switches; each `false` removes one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub instant_flow: bool,
    pub constant_flow: bool,
    pub flow_gate: bool,
    /// Profile text from the LLM profile prompt; raw concatenated titles otherwise.
    pub use_instruct_u: bool,
    /// Embed summarized bodies; raw bodies otherwise.
    pub use_summaries: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            instant_flow: true,
            constant_flow: true,
            flow_gate: true,
            use_instruct_u: true,
            use_summaries: true,
        }
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if !self.instant_flow && !self.constant_flow {
            return Err(Error::Config(
                "at least one of instant_flow / constant_flow must be enabled".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn bits(&self) -> u8 {
        [
            self.instant_flow,
            self.constant_flow,
            self.flow_gate,
            self.use_instruct_u,
            self.use_summaries,
        ]
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (u8::from(b) << i))
    }

    pub(crate) fn from_bits(bits: u8) -> Self {
        let bit = |i: u8| bits & (1 << i) != 0;
        Self {
            instant_flow: bit(0),
            constant_flow: bit(1),
            flow_gate: bit(2),
            use_instruct_u: bit(3),
            use_summaries: bit(4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub dims: EncoderDims,
    #[serde(default)]
    pub flags: AblationFlags,
    #[serde(default = "yes")]
    pub batch_norm: bool,
}

fn yes() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dims: EncoderDims::default(),
            flags: AblationFlags::default(),
            batch_norm: true,
        }
    }
}

impl ModelConfig {
    pub fn rep_dim(&self) -> usize {
        self.dims.rep()
    }

    /// `|h_u|`: one article-width block per enabled flow.
    pub fn user_dim(&self) -> usize {
        let d = self.rep_dim();
        usize::from(self.flags.instant_flow) * d + usize::from(self.flags.constant_flow) * d
    }

    pub fn head_dim(&self) -> usize {
        self.user_dim() + self.rep_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.flags.validate()
    }
}

/// Every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub encoder: EncoderWeights,
    /// Attention bilinear form; absent when the instant flow is disabled.
    pub bilinear: Option<Matrix>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Weights {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, schema: &AttributeSchema, rng: &mut R) -> Self {
        let d = config.rep_dim();
        let encoder = EncoderWeights::init(&config.dims, schema, rng);
        let bilinear = config.flags.instant_flow.then(|| {
            let noise = Normal::new(0.0, 0.01).expect("finite std");
            let mut w = Matrix::identity(d);
            for v in w.as_mut_slice() {
                *v += noise.sample(rng);
            }
            w
        });
        let head = Matrix::xavier(1, config.head_dim(), rng);
        Self {
            encoder,
            bilinear,
            head_w: head.as_slice().to_vec(),
            head_b: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            bilinear: self.bilinear.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
            head_w: vec![0.0; self.head_w.len()],
            head_b: vec![0.0],
        }
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.encoder.tensors();
        if let Some(w) = &self.bilinear {
            out.push(("bilinear".into(), vec![w.rows(), w.cols()], w.as_slice()));
        }
        out.push(("head_w".into(), vec![self.head_w.len()], &self.head_w));
        out.push(("head_b".into(), vec![1], &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        if let Some(w) = &mut self.bilinear {
            out.push(w.as_mut_slice());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }
}

/// One scored candidate with its attention weights over the history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub article_id: String,
    pub probability: f64,
    pub attention: Vec<f64>,
}

/// Parameters plus everything needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub schema: AttributeSchema,
    pub weights: Weights,
    pub norm: NormStats,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, schema: AttributeSchema, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let weights = Weights::init(&config, &schema, rng);
        let norm = NormStats::new(config.dims.attr_hidden);
        Ok(Self {
            config,
            schema,
            weights,
            norm,
        })
    }

    pub fn rep_dim(&self) -> usize {
        self.config.rep_dim()
    }

    /// Checks tensor shapes against the configuration.
    pub fn check_shapes(&self) -> Result<()> {
        let d = self.rep_dim();
        if self.weights.head_w.len() != self.config.head_dim() {
            return Err(Error::Dimension {
                context: "prediction head",
                expected: self.config.head_dim(),
                actual: self.weights.head_w.len(),
            });
        }
        match (&self.weights.bilinear, self.config.flags.instant_flow) {
            (Some(w), true) if w.shape() == (d, d) => {}
            (None, false) => {}
            (w, _) => {
                return Err(Error::Dimension {
                    context: "attention bilinear matrix",
                    expected: if self.config.flags.instant_flow { d * d } else { 0 },
                    actual: w.as_ref().map_or(0, |m| m.rows() * m.cols()),
                })
            }
        }
        Ok(())
    }

    /// Eval-mode encoding; each article is independent of the others.
    pub fn encode(&self, inputs: &[ArticleInput<'_>]) -> Vec<ArticleRep> {
        let mut stats = self.norm.clone();
        encode_batch(
            &self.weights.encoder,
            &mut stats,
            self.config.batch_norm,
            inputs,
            EncodeMode::Eval,
        )
        .0
    }

    /// Eval-mode attribute representation `h_a` alone.
    pub fn encode_attributes(&self, attrs: &[usize]) -> Vec<f64> {
        let e = vec![0.0; self.config.dims.embed];
        let rep = self.encode(&[ArticleInput {
            attrs,
            title: &e,
            body: &e,
        }]);
        rep[0].attr().to_vec()
    }

    /// Encodes one article end to end with a frozen embedder.
    pub fn encode_article(
        &self,
        article: &crate::data::Article,
        embedder: &dyn TextEmbedder,
    ) -> Result<ArticleRep> {
        let f = crate::pipeline::ArticleFeatures::build(
            article,
            &self.schema,
            embedder,
            self.config.flags.use_summaries,
        )?;
        Ok(self.encode(&[f.input()]).remove(0))
    }

    /// Title projection of a frozen profile embedding. A zero embedding
    /// (no profile) closes the constant flow entirely.
    pub fn profile_projection(&self, profile_embedding: &[f64]) -> Result<Option<Vec<f64>>> {
        if profile_embedding.iter().all(|&x| x == 0.0) {
            return Ok(None);
        }
        self.weights
            .encoder
            .project(profile_embedding, TextSide::Title)
            .map(Some)
    }

    /// `h_cons` for a profile text and candidate representation.
    pub fn constant_rep(
        &self,
        embedder: &dyn TextEmbedder,
        profile_key: &str,
        profile_text: &str,
        candidate: &[f64],
    ) -> Result<Vec<f64>> {
        let e = embedder.embed(EmbedItem {
            key: profile_key,
            text: profile_text,
        })?;
        let g = self.profile_projection(&e)?;
        let gate = gate_vector(g.as_deref(), self.config.dims.attr_out, self.config.dims.proj);
        Ok(constant_rep(&gate, candidate, self.config.flags.flow_gate))
    }

    pub fn forward(&self, history: &[&[f64]], profile: Option<&[f64]>, candidate: &[f64]) -> ExampleForward {
        flow::forward_example(
            &self.weights,
            &self.config.flags,
            self.config.dims.attr_out,
            self.config.dims.proj,
            history,
            profile,
            candidate,
        )
    }

    /// Scores candidates from precomputed representations. This is the single
    /// scoring path used by evaluation and by the serving endpoint.
    pub fn score_reps(
        &self,
        history: &[&[f64]],
        profile_embedding: Option<&[f64]>,
        candidates: &[(&str, &[f64])],
    ) -> Result<Vec<ScoredCandidate>> {
        let d = self.rep_dim();
        if let Some(h) = history.iter().find(|h| h.len() != d) {
            return Err(Error::Dimension {
                context: "history representation",
                expected: d,
                actual: h.len(),
            });
        }
        let projected = match profile_embedding {
            Some(e) => self.profile_projection(e)?,
            None => None,
        };
        candidates
            .iter()
            .map(|(id, rep)| {
                if rep.len() != d {
                    return Err(Error::Dimension {
                        context: "candidate representation",
                        expected: d,
                        actual: rep.len(),
                    });
                }
                let f = self.forward(history, projected.as_deref(), rep);
                Ok(ScoredCandidate {
                    article_id: id.to_string(),
                    probability: f.probability,
                    attention: f.alpha,
                })
            })
            .collect()
    }
}
