//! Per-candidate forward and reverse pass of the scoring network.
//!
//! ```text
//! α_i     = softmax_i(h_c · W · h_i)
//! ins     = Σ α_i h_i                      (zero for an empty history)
//! G       = [0_A | g | g],  g = title projection of the profile embedding
//! cons    = G ⊙ h_c                        (G alone when the gate is off)
//! p       = σ(w · [ins | cons | h_c] + b)
//! ```

use super::{AblationFlags, Weights};
use crate::linalg::{axpy, dot, hadamard, sigmoid, softmax, Matrix};

/// Candidate-conditioned attention over history representations.
/// Empty history yields an empty weight vector.
pub fn attention_weights(candidate: &[f64], bilinear: &Matrix, history: &[&[f64]]) -> Vec<f64> {
    let query = bilinear.matvec_t(candidate);
    let scores: Vec<f64> = history.iter().map(|h| dot(&query, h)).collect();
    softmax(&scores)
}

/// `Σ α_i h_i`, or zeros of width `dim` for an empty history.
pub fn instant_rep(alpha: &[f64], history: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (a, h) in alpha.iter().zip(history) {
        axpy(*a, h, &mut out);
    }
    out
}

/// Lays the projected profile `g` (width P) over the title and body slices
/// of an article-shaped vector; the attribute slice stays closed.
pub fn gate_vector(profile: Option<&[f64]>, attr_out: usize, proj: usize) -> Vec<f64> {
    let mut out = vec![0.0; attr_out + 2 * proj];
    if let Some(g) = profile {
        out[attr_out..attr_out + proj].copy_from_slice(g);
        out[attr_out + proj..].copy_from_slice(g);
    }
    out
}

/// `G ⊙ h_c` with the gate on, `G` with it off.
pub fn constant_rep(gate: &[f64], candidate: &[f64], flow_gate: bool) -> Vec<f64> {
    if flow_gate {
        hadamard(gate, candidate)
    } else {
        gate.to_vec()
    }
}

/// Everything computed for one (history, profile, candidate) triple.
#[derive(Debug, Clone)]
pub struct ExampleForward {
    pub alpha: Vec<f64>,
    query: Vec<f64>,
    pub instant: Option<Vec<f64>>,
    gate: Vec<f64>,
    pub constant: Option<Vec<f64>>,
    pub logit: f64,
    pub probability: f64,
}

impl ExampleForward {
    /// `[ins | cons]` as fed to the head.
    pub fn user_rep(&self) -> Vec<f64> {
        let mut u = self.instant.clone().unwrap_or_default();
        u.extend(self.constant.iter().flatten());
        u
    }
}

pub fn forward_example(
    weights: &Weights,
    flags: &AblationFlags,
    attr_out: usize,
    proj: usize,
    history: &[&[f64]],
    profile: Option<&[f64]>,
    candidate: &[f64],
) -> ExampleForward {
    let dim = candidate.len();
    let mut logit = weights.head_b[0];
    let mut offset = 0;

    let (alpha, query, instant) = match (&weights.bilinear, flags.instant_flow) {
        (Some(w), true) => {
            let query = w.matvec_t(candidate);
            let scores: Vec<f64> = history.iter().map(|h| dot(&query, h)).collect();
            let alpha = softmax(&scores);
            let ins = instant_rep(&alpha, history, dim);
            logit += dot(&weights.head_w[offset..offset + dim], &ins);
            offset += dim;
            (alpha, query, Some(ins))
        }
        _ => (Vec::new(), Vec::new(), None),
    };

    let gate = gate_vector(profile, attr_out, proj);
    let constant = if flags.constant_flow {
        let cons = constant_rep(&gate, candidate, flags.flow_gate);
        logit += dot(&weights.head_w[offset..offset + dim], &cons);
        offset += dim;
        Some(cons)
    } else {
        None
    };

    logit += dot(&weights.head_w[offset..offset + dim], candidate);
    ExampleForward {
        alpha,
        query,
        instant,
        gate,
        constant,
        logit,
        probability: sigmoid(logit),
    }
}

/// Gradients flowing out of one example, besides those written into `grads`.
pub struct ExampleGrads {
    pub d_history: Vec<Vec<f64>>,
    pub d_candidate: Vec<f64>,
    /// ∂L/∂g for the projected profile, when a profile was present.
    pub d_profile: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn backward_example(
    weights: &Weights,
    flags: &AblationFlags,
    attr_out: usize,
    proj: usize,
    history: &[&[f64]],
    profile: Option<&[f64]>,
    candidate: &[f64],
    fwd: &ExampleForward,
    d_logit: f64,
    grads: &mut Weights,
) -> ExampleGrads {
    let dim = candidate.len();
    grads.head_b[0] += d_logit;
    let mut d_candidate = vec![0.0; dim];
    let mut d_history = vec![vec![0.0; dim]; history.len()];
    let mut d_profile = None;
    let mut offset = 0;

    if let (Some(ins), Some(w)) = (&fwd.instant, &weights.bilinear) {
        let head = &weights.head_w[offset..offset + dim];
        axpy(d_logit, ins, &mut grads.head_w[offset..offset + dim]);
        offset += dim;
        if !history.is_empty() {
            // d ins = d_logit · head
            let d_alpha: Vec<f64> = history.iter().map(|h| d_logit * dot(head, h)).collect();
            let mean: f64 = fwd.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let mut weighted = vec![0.0; dim];
            for (i, h) in history.iter().enumerate() {
                axpy(d_logit * fwd.alpha[i], head, &mut d_history[i]);
                let d_score = fwd.alpha[i] * (d_alpha[i] - mean);
                axpy(d_score, &fwd.query, &mut d_history[i]);
                axpy(d_score, h, &mut weighted);
            }
            let gw = grads.bilinear.as_mut().expect("bilinear gradient slot");
            gw.add_outer(1.0, candidate, &weighted);
            axpy(1.0, &w.matvec(&weighted), &mut d_candidate);
        }
    }

    if let Some(cons) = &fwd.constant {
        let head = &weights.head_w[offset..offset + dim];
        axpy(d_logit, cons, &mut grads.head_w[offset..offset + dim]);
        offset += dim;
        let d_gate: Vec<f64> = if flags.flow_gate {
            for j in 0..dim {
                d_candidate[j] += d_logit * head[j] * fwd.gate[j];
            }
            (0..dim).map(|j| d_logit * head[j] * candidate[j]).collect()
        } else {
            head.iter().map(|h| d_logit * h).collect()
        };
        if profile.is_some() {
            let d_g: Vec<f64> = (0..proj)
                .map(|k| d_gate[attr_out + k] + d_gate[attr_out + proj + k])
                .collect();
            d_profile = Some(d_g);
        }
    }

    let head = &weights.head_w[offset..offset + dim];
    axpy(d_logit, candidate, &mut grads.head_w[offset..offset + dim]);
    axpy(d_logit, head, &mut d_candidate);

    ExampleGrads {
        d_history,
        d_candidate,
        d_profile,
    }
}
