//! Optimizer, loss and training-loop contracts.

mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::desk::{train_config, Desk};
use viewflow::data::ClickRule;
use viewflow::encoder::{EmbedItem, TextEmbedder};
use viewflow::model::AblationFlags;
use viewflow::training::{bce, build_examples, mean_bce, save_log, train, Adam, Split};
use viewflow::Error;

fn planted() -> Desk {
    Desk::new(ClickRule::PlantedBilinear, 7, AblationFlags::default())
}

#[test]
fn adam_first_step_matches_hand_evaluation() {
    let desk = planted();
    let mut w = desk.model(0).weights;
    let before = w.clone();
    let mut g = w.zeros_like();
    for t in g.tensors_mut() {
        t.iter_mut().for_each(|x| *x = 0.3);
    }
    let lr = 1e-5;
    Adam::new(&w).update(&mut w, &g, lr);
    // m = 0.1·0.3, v = 0.001·0.09; bias correction divides by 0.1 and 0.001.
    let m_hat: f64 = 0.1 * 0.3 / 0.1;
    let v_hat: f64 = 0.001 * 0.09 / 0.001;
    let step = lr * m_hat / (v_hat.sqrt() + 1e-8);
    assert!((step - 1e-5).abs() < 1e-12);
    for (a, b) in w.tensors().iter().zip(before.tensors()) {
        for (x, y) in a.2.iter().zip(b.2) {
            assert!(((y - x) - step).abs() < 1e-15, "{}: {}", a.0, y - x);
        }
    }
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let desk = planted();
    let mut w = desk.model(1).weights;
    let before = w.clone();
    let g = w.zeros_like();
    let mut adam = Adam::new(&w);
    for _ in 0..3 {
        adam.update(&mut w, &g, 0.1);
    }
    assert_eq!(w, before);
}

#[test]
fn mean_loss_is_per_example_sum_over_n() {
    let p = [0.9, 0.2, 0.6, 0.35];
    let y = [1, 0, 0, 1];
    let by_hand = (-(0.9f64.ln()) - 0.8f64.ln() - 0.4f64.ln() - 0.35f64.ln()) / 4.0;
    let summed: f64 = p.iter().zip(y).map(|(&p, y)| bce(p, y)).sum::<f64>() / 4.0;
    assert!((mean_bce(&p, &y) - by_hand).abs() < 1e-15);
    assert!((mean_bce(&p, &y) - summed).abs() < 1e-15);
    assert!((bce(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((bce(1.0 - 1e-7, 1) - 1e-7).abs() < 1e-12);
}

#[test]
fn zero_steps_returns_initial_model() {
    let desk = planted();
    let init = desk.model(2);
    let split = Split::by_time(&desk.prepared, 0.05);
    let out = train(init.clone(), &desk.prepared, &split, &train_config(2, 0)).unwrap();
    assert_eq!(out.model, init);
    assert_eq!(out.steps_run, 0);
    assert!(out.log.is_empty());
}

#[test]
fn patience_one_stops_on_constant_labels() {
    let mut desk = planted();
    for imp in &mut desk.prepared.impressions {
        imp.candidates.iter_mut().for_each(|c| c.1 = 0);
    }
    let init = desk.model(3);
    let split = Split::by_time(&desk.prepared, 0.05);
    let cfg = viewflow::TrainConfig {
        patience: 1,
        eval_every: 10,
        ..train_config(3, 100)
    };
    let out = train(init.clone(), &desk.prepared, &split, &cfg).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.steps_run, 10);
    assert_eq!(out.log.len(), 1);
    assert_eq!(out.log[0].val_auc, None);
    // Nothing ever improved, so the initial parameters are kept.
    assert_eq!(out.model, init);
}

#[test]
fn empty_training_set_is_an_error() {
    let desk = planted();
    let split = Split {
        train: vec![],
        val: vec![0],
    };
    assert!(train(desk.model(0), &desk.prepared, &split, &train_config(0, 10)).is_err());
}

#[test]
fn nan_parameters_abort_with_batch_dump() {
    let desk = planted();
    let mut model = desk.model(4);
    model.weights.head_b[0] = f64::NAN;
    let split = Split::by_time(&desk.prepared, 0.05);
    match train(model, &desk.prepared, &split, &train_config(4, 5)) {
        Err(Error::NonFiniteLoss { step, dump }) => {
            assert_eq!(step, 1);
            assert!(dump.contains("\"impression\""));
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

#[test]
fn same_seed_gives_identical_checkpoint() {
    let desk = planted();
    let split = Split::by_time(&desk.prepared, 0.05);
    let cfg = train_config(5, 60);
    let a = train(desk.model(5), &desk.prepared, &split, &cfg).unwrap();
    let b = train(desk.model(5), &desk.prepared, &split, &cfg).unwrap();
    assert_eq!(a.model.to_bytes().unwrap(), b.model.to_bytes().unwrap());
    assert_eq!(a.step_losses, b.step_losses);
    let c = train(desk.model(5), &desk.prepared, &split, &train_config(6, 60)).unwrap();
    assert_ne!(a.step_losses, c.step_losses);
}

#[test]
fn loss_falls_and_embedder_stays_frozen() {
    let desk = planted();
    let snapshot = |d: &Desk| -> Vec<u64> {
        d.dataset
            .corpus
            .articles()
            .iter()
            .flat_map(|a| {
                d.embedder
                    .embed(EmbedItem {
                        key: &a.id,
                        text: &a.title,
                    })
                    .unwrap()
            })
            .map(f64::to_bits)
            .collect()
    };
    let before = snapshot(&desk);
    let features_before = desk.prepared.features.clone();
    let split = Split::by_time(&desk.prepared, 0.05);
    let out = train(desk.model(7), &desk.prepared, &split, &train_config(7, 1000)).unwrap();
    let first: f64 = out.step_losses[..100].iter().sum::<f64>() / 100.0;
    let last: f64 = out.step_losses[900..1000].iter().sum::<f64>() / 100.0;
    assert!(last < first, "moving-average loss {first} → {last}");
    assert_eq!(snapshot(&desk), before);
    assert_eq!(desk.prepared.features, features_before);
}

#[test]
fn sampled_negatives_respect_ratio() {
    let desk = planted();
    let split = Split::by_time(&desk.prepared, 0.05);
    let ex = build_examples(
        &desk.prepared,
        &split.train[..20],
        2,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let positives = ex.iter().filter(|e| e.label == 1).count();
    assert!(positives > 0);
    assert!(ex.len() <= positives * 3);
    let all = build_examples(
        &desk.prepared,
        &split.train[..20],
        0,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let n: usize = split.train[..20]
        .iter()
        .map(|&k| desk.prepared.impressions[k].candidates.len())
        .sum();
    assert_eq!(all.len(), n);
}

#[test]
fn training_log_has_documented_columns() {
    let desk = planted();
    let split = Split::by_time(&desk.prepared, 0.05);
    let out = train(desk.model(8), &desk.prepared, &split, &train_config(8, 50)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    save_log(&out.log, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,loss,val_auc,val_mrr,wall_ms"));
    assert!(lines.next().unwrap().starts_with("50,"));
}
