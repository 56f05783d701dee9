//! Toy instances for checking analytic gradients against central finite
//! differences. Shared by the gradient tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewflow::encoder::{AttributeSchema, AttributeSpec, EncoderDims, Vocab};
use viewflow::model::{AblationFlags, Model, ModelConfig};
use viewflow::pipeline::{ArticleFeatures, Prepared, PreparedImpression};
use viewflow::training::{batch_gradients, Example};

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

pub fn toy(flags: AblationFlags, batch_norm: bool, seed: u64) -> (Model, Prepared, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = AttributeSchema::from_parts(
        vec![
            AttributeSpec::categorical("category"),
            AttributeSpec::categorical("source"),
        ],
        vec![
            Vocab::new(["a", "b", "c"].map(String::from)),
            Vocab::new(["x", "y"].map(String::from)),
        ],
    );
    // D = A + 2P = 2 + 2·2 = 6
    let config = ModelConfig {
        dims: EncoderDims {
            embed: 3,
            proj: 2,
            attr_embed: 2,
            attr_hidden: 3,
            attr_out: 2,
        },
        flags,
        batch_norm,
    };
    let mut model = Model::new(config, schema, &mut rng).unwrap();
    for t in model.weights.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.4..0.4);
        }
    }

    let n_articles = 6;
    // Article 5 uses category index 3 ("c"), which no batch article touches
    // except through this one; index 0 (unknown) is never used.
    let features = (0..n_articles)
        .map(|i| ArticleFeatures {
            attrs: vec![1 + i % 3, 1 + i % 2],
            title: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            body: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let profiles = vec![vec![0.6, -0.3, 0.8], vec![-0.2, 0.9, 0.1], vec![0.0, 0.0, 0.0]];
    let imp = |id: &str, history: Vec<usize>, profile, candidates: Vec<(usize, u8)>| PreparedImpression {
        id: id.into(),
        user: "u".into(),
        timestamp: 0,
        history,
        profile,
        candidates,
    };
    let impressions = vec![
        imp("i0", vec![0, 1, 2], Some(0), vec![(3, 1), (4, 0)]),
        imp("i1", vec![2], Some(1), vec![(0, 0), (5, 1)]),
        imp("i2", vec![], None, vec![(1, 1), (3, 0)]),
        imp("i3", vec![4, 3], Some(2), vec![(2, 0), (0, 1)]),
    ];
    let prepared = Prepared {
        article_ids: (0..n_articles).map(|i| format!("A{i}")).collect(),
        features,
        profiles,
        impressions,
    };
    let batch = prepared
        .impressions
        .iter()
        .enumerate()
        .flat_map(|(k, imp)| {
            imp.candidates.iter().map(move |&(candidate, label)| Example {
                impression: k,
                candidate,
                label,
            })
        })
        .collect();
    (model, prepared, batch)
}

pub fn loss(model: &Model, prepared: &Prepared, batch: &[Example]) -> f64 {
    let mut stats = model.norm.clone();
    let mut grads = model.weights.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    batch_gradients(model, &mut stats, prepared, batch, 0.0, &mut rng, &mut grads).loss
}

/// Largest relative error over every scalar parameter, with its location.
#[allow(clippy::needless_range_loop)]
pub fn worst_relative_error(model: &Model, prepared: &Prepared, batch: &[Example]) -> (f64, String) {
    let mut grads = model.weights.zeros_like();
    let mut stats = model.norm.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    batch_gradients(model, &mut stats, prepared, batch, 0.0, &mut rng, &mut grads);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, _, d)| (n, d.to_vec()))
        .collect();

    let mut worst = (0.0, String::new());
    let n_tensors = analytic.len();
    for t in 0..n_tensors {
        let len = analytic[t].1.len();
        for i in 0..len {
            let mut probe = model.clone();
            let base = probe.weights.tensors_mut()[t][i];
            probe.weights.tensors_mut()[t][i] = base + H;
            let up = loss(&probe, prepared, batch);
            probe.weights.tensors_mut()[t][i] = base - H;
            let down = loss(&probe, prepared, batch);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[t].1[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{}[{i}]: analytic {a:e}, numeric {numeric:e}", analytic[t].0),
                );
            }
        }
    }
    worst
}
