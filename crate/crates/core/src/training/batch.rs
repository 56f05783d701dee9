//! Mini-batch loss and reverse pass through head, flows and encoder.

use std::collections::HashMap;

use rand::RngCore;

use crate::encoder::{backward_batch, encode_batch, ArticleInput, EncodeMode, NormStats};
use crate::linalg::axpy;
use crate::model::flow::{backward_example, forward_example};
use crate::model::{Model, Weights};
use crate::pipeline::Prepared;

pub const PROB_CLAMP: f64 = 1e-7;

/// One labelled (impression, candidate) pair; indices into a [`Prepared`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub impression: usize,
    pub candidate: usize,
    pub label: u8,
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y > 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn mean_bce(probabilities: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = probabilities.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum();
    total / probabilities.len() as f64
}

/// `∂L/∂logit` for one example of a batch of `n`; zero where the clamp is active.
fn d_logit(p: f64, y: u8, n: usize) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    (p - f64::from(y)) / n as f64
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub loss: f64,
    pub probabilities: Vec<f64>,
}

/// Forward and reverse pass over `batch` in train mode. Gradients of the mean
/// loss are added into `grads`; `stats` receives the running batch-norm update.
pub fn batch_gradients(
    model: &Model,
    stats: &mut NormStats,
    prepared: &Prepared,
    batch: &[Example],
    dropout: f64,
    rng: &mut dyn RngCore,
    grads: &mut Weights,
) -> BatchOutput {
    let w = &model.weights;
    let cfg = &model.config;
    let (attr_out, proj) = (cfg.dims.attr_out, cfg.dims.proj);

    // Unique articles in first-seen order; batch norm sees each once.
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut slot = |a: usize| {
        *local.entry(a).or_insert_with(|| {
            order.push(a);
            order.len() - 1
        })
    };
    let mut example_slots = Vec::with_capacity(batch.len());
    for ex in batch {
        let imp = &prepared.impressions[ex.impression];
        let hist: Vec<usize> = imp.history.iter().map(|&h| slot(h)).collect();
        example_slots.push((hist, slot(ex.candidate)));
    }
    let inputs: Vec<ArticleInput<'_>> = order.iter().map(|&a| prepared.features[a].input()).collect();
    let (reps, cache) = encode_batch(
        &w.encoder,
        stats,
        cfg.batch_norm,
        &inputs,
        EncodeMode::Train { dropout, rng },
    );

    let mut projected: HashMap<usize, Option<Vec<f64>>> = HashMap::new();
    let mut d_reps = vec![vec![0.0; cfg.rep_dim()]; order.len()];
    let mut d_profiles: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut probabilities = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let n = batch.len();

    for (ex, (hist, cand)) in batch.iter().zip(&example_slots) {
        let imp = &prepared.impressions[ex.impression];
        let profile: Option<&[f64]> = match imp.profile {
            Some(p) => projected
                .entry(p)
                .or_insert_with(|| {
                    model
                        .profile_projection(&prepared.profiles[p])
                        .expect("profile width checked when preparing")
                })
                .as_deref(),
            None => None,
        };
        let history: Vec<&[f64]> = hist.iter().map(|&s| reps[s].h.as_slice()).collect();
        let candidate = reps[*cand].h.as_slice();
        let fwd = forward_example(w, &cfg.flags, attr_out, proj, &history, profile, candidate);
        let g = d_logit(fwd.probability, ex.label, n);
        probabilities.push(fwd.probability);
        labels.push(ex.label);
        if g == 0.0 {
            continue;
        }
        let out = backward_example(
            w, &cfg.flags, attr_out, proj, &history, profile, candidate, &fwd, g, grads,
        );
        for (&s, d) in hist.iter().zip(&out.d_history) {
            axpy(1.0, d, &mut d_reps[s]);
        }
        axpy(1.0, &out.d_candidate, &mut d_reps[*cand]);
        if let (Some(d_g), Some(p)) = (out.d_profile, imp.profile) {
            let acc = d_profiles.entry(p).or_insert_with(|| vec![0.0; proj]);
            axpy(1.0, &d_g, acc);
        }
    }

    // Profiles pass through the shared title projection.
    let mut touched: Vec<_> = d_profiles.into_iter().collect();
    touched.sort_by_key(|(p, _)| *p);
    for (p, d_g) in touched {
        let e = &prepared.profiles[p];
        grads.encoder.title_w.add_outer(1.0, &d_g, e);
        axpy(1.0, &d_g, &mut grads.encoder.title_b);
    }

    backward_batch(
        &w.encoder,
        cfg.batch_norm,
        &inputs,
        &cache,
        &d_reps,
        &mut grads.encoder,
    );

    BatchOutput {
        loss: mean_bce(&probabilities, &labels),
        probabilities,
    }
}
