//! Analytic gradients against central finite differences on toy instances.

mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::gradcheck::{toy, worst_relative_error, TOLERANCE};
use viewflow::model::AblationFlags;
use viewflow::training::batch_gradients;

fn check(flags: AblationFlags, batch_norm: bool) {
    for seed in 0..3 {
        let (model, prepared, batch) = toy(flags, batch_norm, seed);
        let (rel, at) = worst_relative_error(&model, &prepared, &batch);
        assert!(
            rel < TOLERANCE,
            "flags {flags:?} bn {batch_norm} seed {seed}: {rel:e} at {at}"
        );
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    check(AblationFlags::default(), true);
}

#[test]
fn gradients_without_batch_norm() {
    check(AblationFlags::default(), false);
}

#[test]
fn gradients_without_instant_flow() {
    check(
        AblationFlags {
            instant_flow: false,
            ..Default::default()
        },
        true,
    );
}

#[test]
fn gradients_without_constant_flow() {
    check(
        AblationFlags {
            constant_flow: false,
            ..Default::default()
        },
        true,
    );
}

#[test]
fn gradients_with_gate_off() {
    check(
        AblationFlags {
            flow_gate: false,
            ..Default::default()
        },
        true,
    );
}

#[test]
fn untouched_attribute_rows_get_exactly_zero() {
    let (model, prepared, batch) = toy(AblationFlags::default(), true, 1);
    let mut grads = model.weights.zeros_like();
    let mut stats = model.norm.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    batch_gradients(&model, &mut stats, &prepared, &batch, 0.0, &mut rng, &mut grads);
    // Row 0 (unknown token) is never looked up.
    for table in &grads.encoder.attr_tables {
        assert!(table.row(0).iter().all(|&g| g == 0.0));
        assert!((1..table.rows()).any(|r| table.row(r).iter().any(|&g| g != 0.0)));
    }
}

#[test]
fn dropout_changes_training_forward_only() {
    let (model, prepared, batch) = toy(AblationFlags::default(), true, 2);
    let run = |dropout: f64, seed: u64| {
        let mut grads = model.weights.zeros_like();
        let mut stats = model.norm.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        batch_gradients(
            &model, &mut stats, &prepared, &batch, dropout, &mut rng, &mut grads,
        )
        .loss
    };
    assert_eq!(run(0.5, 3), run(0.5, 3));
    assert_ne!(run(0.5, 3), run(0.0, 3));
    assert_eq!(run(0.0, 3), run(0.0, 4));
}
