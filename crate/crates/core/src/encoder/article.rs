//! Article representation `h_d = [h_a | h_t | h_b]` and its reverse pass.
//!
//! `h_a` comes from attribute embeddings → hidden layer (optional batch norm,
//! tanh, dropout) → output layer. `h_t` and `h_b` are affine projections of
//! frozen text embeddings of the title and (summarized) body.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attributes::AttributeSchema;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderDims {
    /// Frozen text embedding width (E).
    pub embed: usize,
    /// Title/body projection width (P).
    pub proj: usize,
    /// Per-attribute embedding width.
    pub attr_embed: usize,
    pub attr_hidden: usize,
    /// Attribute representation width (A).
    pub attr_out: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            embed: 256,
            proj: 128,
            attr_embed: 16,
            attr_hidden: 64,
            attr_out: 64,
        }
    }
}

impl EncoderDims {
    /// Width of `h_d`: `A + 2P`.
    pub fn rep(&self) -> usize {
        self.attr_out + 2 * self.proj
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.proj == 0 || self.attr_out == 0 || self.attr_hidden == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.attr_embed == 0 {
            return Err(Error::Config("attribute embedding width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSide {
    Title,
    Body,
}

/// Trainable encoder tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub attr_tables: Vec<Matrix>,
    pub attr_w1: Matrix,
    pub attr_b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub attr_w2: Matrix,
    pub attr_b2: Vec<f64>,
    pub title_w: Matrix,
    pub title_b: Vec<f64>,
    pub body_w: Matrix,
    pub body_b: Vec<f64>,
}

/// Batch-norm running statistics (not trainable).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl NormStats {
    pub fn new(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            var: vec![1.0; n],
        }
    }
}

impl EncoderWeights {
    pub fn init<R: Rng + ?Sized>(dims: &EncoderDims, schema: &AttributeSchema, rng: &mut R) -> Self {
        let attr_in = schema.len() * dims.attr_embed;
        Self {
            attr_tables: schema
                .vocabs
                .iter()
                .map(|v| Matrix::gaussian(v.len(), dims.attr_embed, 0.1, rng))
                .collect(),
            attr_w1: Matrix::xavier(dims.attr_hidden, attr_in, rng),
            attr_b1: vec![0.0; dims.attr_hidden],
            bn_gamma: vec![1.0; dims.attr_hidden],
            bn_beta: vec![0.0; dims.attr_hidden],
            attr_w2: Matrix::xavier(dims.attr_out, dims.attr_hidden, rng),
            attr_b2: vec![0.0; dims.attr_out],
            title_w: Matrix::xavier(dims.proj, dims.embed, rng),
            title_b: vec![0.0; dims.proj],
            body_w: Matrix::xavier(dims.proj, dims.embed, rng),
            body_b: vec![0.0; dims.proj],
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let zv = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            attr_tables: self.attr_tables.iter().map(z).collect(),
            attr_w1: z(&self.attr_w1),
            attr_b1: zv(&self.attr_b1),
            bn_gamma: zv(&self.bn_gamma),
            bn_beta: zv(&self.bn_beta),
            attr_w2: z(&self.attr_w2),
            attr_b2: zv(&self.attr_b2),
            title_w: z(&self.title_w),
            title_b: zv(&self.title_b),
            body_w: z(&self.body_w),
            body_b: zv(&self.body_b),
        }
    }

    /// `(name, shape, values)` for every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = self
            .attr_tables
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("attr_table.{i}"), vec![t.rows(), t.cols()], t.as_slice()))
            .collect();
        let mats: [(&str, &Matrix); 4] = [
            ("attr_w1", &self.attr_w1),
            ("attr_w2", &self.attr_w2),
            ("title_w", &self.title_w),
            ("body_w", &self.body_w),
        ];
        let vecs: [(&str, &Vec<f64>); 6] = [
            ("attr_b1", &self.attr_b1),
            ("bn_gamma", &self.bn_gamma),
            ("bn_beta", &self.bn_beta),
            ("attr_b2", &self.attr_b2),
            ("title_b", &self.title_b),
            ("body_b", &self.body_b),
        ];
        for (n, m) in mats {
            out.push((n.to_string(), vec![m.rows(), m.cols()], m.as_slice()));
        }
        for (n, v) in vecs {
            out.push((n.to_string(), vec![v.len()], v.as_slice()));
        }
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.attr_tables.iter_mut().map(|t| t.as_mut_slice()).collect();
        out.push(self.attr_w1.as_mut_slice());
        out.push(self.attr_w2.as_mut_slice());
        out.push(self.title_w.as_mut_slice());
        out.push(self.body_w.as_mut_slice());
        out.push(&mut self.attr_b1);
        out.push(&mut self.bn_gamma);
        out.push(&mut self.bn_beta);
        out.push(&mut self.attr_b2);
        out.push(&mut self.title_b);
        out.push(&mut self.body_b);
        out
    }

    /// `W·h + b` for the title or body projection.
    pub fn project(&self, h: &[f64], side: TextSide) -> Result<Vec<f64>> {
        let (w, b) = match side {
            TextSide::Title => (&self.title_w, &self.title_b),
            TextSide::Body => (&self.body_w, &self.body_b),
        };
        if h.len() != w.cols() {
            return Err(Error::Dimension {
                context: "text projection input",
                expected: w.cols(),
                actual: h.len(),
            });
        }
        let mut out = w.matvec(h);
        axpy(1.0, b, &mut out);
        Ok(out)
    }
}

/// Encoder inputs for one article: attribute indices and frozen embeddings.
#[derive(Debug, Clone, Copy)]
pub struct ArticleInput<'a> {
    pub attrs: &'a [usize],
    pub title: &'a [f64],
    pub body: &'a [f64],
}

/// Dense article representation with its slice layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleRep {
    pub h: Vec<f64>,
    pub attr_out: usize,
    pub proj: usize,
}

impl ArticleRep {
    pub fn attr(&self) -> &[f64] {
        &self.h[..self.attr_out]
    }

    pub fn title(&self) -> &[f64] {
        &self.h[self.attr_out..self.attr_out + self.proj]
    }

    pub fn body(&self) -> &[f64] {
        &self.h[self.attr_out + self.proj..]
    }
}

pub enum EncodeMode<'r> {
    Eval,
    Train {
        dropout: f64,
        rng: &'r mut dyn rand::RngCore,
    },
}

/// Intermediates kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    x: Vec<Vec<f64>>,
    zhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    act: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
    batch_stats: bool,
}

fn gather_attrs(w: &EncoderWeights, attrs: &[usize]) -> Vec<f64> {
    let mut x = Vec::with_capacity(attrs.len() * w.attr_tables.first().map_or(0, Matrix::cols));
    for (table, &idx) in w.attr_tables.iter().zip(attrs) {
        x.extend_from_slice(table.row(idx.min(table.rows() - 1)));
    }
    x
}

/// Encodes a batch of articles.
///
/// In train mode with batch norm, hidden activations are normalized with the
/// statistics of this batch and the running statistics are updated.
pub fn encode_batch(
    w: &EncoderWeights,
    stats: &mut NormStats,
    batch_norm: bool,
    inputs: &[ArticleInput<'_>],
    mut mode: EncodeMode<'_>,
) -> (Vec<ArticleRep>, EncoderCache) {
    let hidden = w.attr_w1.rows();
    let n = inputs.len();
    let x: Vec<Vec<f64>> = inputs.iter().map(|i| gather_attrs(w, i.attrs)).collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| {
            let mut z = w.attr_w1.matvec(xi);
            axpy(1.0, &w.attr_b1, &mut z);
            z
        })
        .collect();

    let train = matches!(mode, EncodeMode::Train { .. });
    let batch_stats = batch_norm && train && n > 0;
    let (zhat, inv_std) = if !batch_norm {
        (z, vec![1.0; hidden])
    } else {
        let (mean, var) = if batch_stats {
            let mut mean = vec![0.0; hidden];
            for zi in &z {
                axpy(1.0 / n as f64, zi, &mut mean);
            }
            let mut var = vec![0.0; hidden];
            for zi in &z {
                for j in 0..hidden {
                    let d = zi[j] - mean[j];
                    var[j] += d * d / n as f64;
                }
            }
            for j in 0..hidden {
                stats.mean[j] = (1.0 - BN_MOMENTUM) * stats.mean[j] + BN_MOMENTUM * mean[j];
                stats.var[j] = (1.0 - BN_MOMENTUM) * stats.var[j] + BN_MOMENTUM * var[j];
            }
            (mean, var)
        } else {
            (stats.mean.clone(), stats.var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let zhat = z
            .iter()
            .map(|zi| (0..hidden).map(|j| (zi[j] - mean[j]) * inv_std[j]).collect())
            .collect();
        (zhat, inv_std)
    };

    let mut act = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut reps = Vec::with_capacity(n);
    for (i, input) in inputs.iter().enumerate() {
        let a: Vec<f64> = (0..hidden)
            .map(|j| {
                let y = if batch_norm {
                    w.bn_gamma[j] * zhat[i][j] + w.bn_beta[j]
                } else {
                    zhat[i][j]
                };
                y.tanh()
            })
            .collect();
        let m: Vec<f64> = match &mut mode {
            EncodeMode::Train { dropout, rng } if *dropout > 0.0 => {
                let keep = 1.0 - *dropout;
                (0..hidden)
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            _ => vec![1.0; hidden],
        };
        let dropped: Vec<f64> = a.iter().zip(&m).map(|(x, k)| x * k).collect();
        let mut h = w.attr_w2.matvec(&dropped);
        axpy(1.0, &w.attr_b2, &mut h);
        let mut t = w.title_w.matvec(input.title);
        axpy(1.0, &w.title_b, &mut t);
        let mut b = w.body_w.matvec(input.body);
        axpy(1.0, &w.body_b, &mut b);
        h.extend(t);
        h.extend(b);
        reps.push(ArticleRep {
            h,
            attr_out: w.attr_w2.rows(),
            proj: w.title_w.rows(),
        });
        act.push(a);
        mask.push(m);
    }
    (
        reps,
        EncoderCache {
            x,
            zhat,
            inv_std,
            act,
            mask,
            batch_stats,
        },
    )
}

/// Accumulates encoder gradients given `d_reps[i] = ∂L/∂h_d` for each input.
/// Only the attribute-table rows that were looked up receive gradient.
#[allow(clippy::needless_range_loop)]
pub fn backward_batch(
    w: &EncoderWeights,
    batch_norm: bool,
    inputs: &[ArticleInput<'_>],
    cache: &EncoderCache,
    d_reps: &[Vec<f64>],
    grads: &mut EncoderWeights,
) {
    let a_dim = w.attr_w2.rows();
    let p = w.title_w.rows();
    let hidden = w.attr_w1.rows();
    let n = inputs.len();

    let mut dy_all = Vec::with_capacity(n);
    for (i, input) in inputs.iter().enumerate() {
        let d = &d_reps[i];
        let (dh_a, rest) = d.split_at(a_dim);
        let (dh_t, dh_b) = rest.split_at(p);
        grads.title_w.add_outer(1.0, dh_t, input.title);
        axpy(1.0, dh_t, &mut grads.title_b);
        grads.body_w.add_outer(1.0, dh_b, input.body);
        axpy(1.0, dh_b, &mut grads.body_b);

        let dropped: Vec<f64> = cache.act[i]
            .iter()
            .zip(&cache.mask[i])
            .map(|(x, k)| x * k)
            .collect();
        grads.attr_w2.add_outer(1.0, dh_a, &dropped);
        axpy(1.0, dh_a, &mut grads.attr_b2);
        let d_dropped = w.attr_w2.matvec_t(dh_a);
        let dy: Vec<f64> = (0..hidden)
            .map(|j| {
                let a = cache.act[i][j];
                d_dropped[j] * cache.mask[i][j] * (1.0 - a * a)
            })
            .collect();
        dy_all.push(dy);
    }

    let dz_all: Vec<Vec<f64>> = if !batch_norm {
        dy_all
    } else {
        for i in 0..n {
            for j in 0..hidden {
                grads.bn_gamma[j] += dy_all[i][j] * cache.zhat[i][j];
                grads.bn_beta[j] += dy_all[i][j];
            }
        }
        let dzhat: Vec<Vec<f64>> = dy_all
            .iter()
            .map(|dy| (0..hidden).map(|j| dy[j] * w.bn_gamma[j]).collect())
            .collect();
        if cache.batch_stats {
            let nf = n as f64;
            let mut sum = vec![0.0; hidden];
            let mut sum_z = vec![0.0; hidden];
            for i in 0..n {
                for j in 0..hidden {
                    sum[j] += dzhat[i][j];
                    sum_z[j] += dzhat[i][j] * cache.zhat[i][j];
                }
            }
            (0..n)
                .map(|i| {
                    (0..hidden)
                        .map(|j| {
                            cache.inv_std[j] / nf * (nf * dzhat[i][j] - sum[j] - cache.zhat[i][j] * sum_z[j])
                        })
                        .collect()
                })
                .collect()
        } else {
            dzhat
                .iter()
                .map(|d| (0..hidden).map(|j| d[j] * cache.inv_std[j]).collect())
                .collect()
        }
    };

    for (i, input) in inputs.iter().enumerate() {
        let dz = &dz_all[i];
        grads.attr_w1.add_outer(1.0, dz, &cache.x[i]);
        axpy(1.0, dz, &mut grads.attr_b1);
        let dx = w.attr_w1.matvec_t(dz);
        let width = w.attr_tables.first().map_or(0, Matrix::cols);
        for (k, &idx) in input.attrs.iter().enumerate() {
            let table = &mut grads.attr_tables[k];
            let row = idx.min(table.rows() - 1);
            axpy(1.0, &dx[k * width..(k + 1) * width], table.row_mut(row));
        }
    }
}
