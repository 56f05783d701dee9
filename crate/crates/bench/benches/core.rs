use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use viewflow::metrics::{evaluate, RankedImpression};
use viewflow::training::{batch_gradients, build_examples, Split};
use viewflow::RankRequest;

fn ranking(c: &mut Criterion) {
    let b = viewflow_bench::setup();
    let user = b.serving.store.users.keys().next().unwrap().clone();
    let ids = &b.prepared.article_ids;
    let mut group = c.benchmark_group("rank");
    for n in [10, 100, 1000] {
        let request = RankRequest {
            user_id: user.clone(),
            candidates: (0..n).map(|i| ids[i % ids.len()].clone()).collect(),
            top_k: Some(10),
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &request, |bench, r| {
            bench.iter(|| b.serving.rank(black_box(r)).unwrap())
        });
    }
    group.finish();
}

fn encoding(c: &mut Criterion) {
    let b = viewflow_bench::setup();
    let article = &b.dataset.corpus.articles()[0];
    c.bench_function("encode_article", |bench| {
        bench.iter(|| b.model.encode_article(black_box(article), &b.embedder).unwrap())
    });
    c.bench_function("encode_corpus", |bench| {
        bench.iter(|| b.prepared.encode_all(&b.model))
    });
}

fn training_step(c: &mut Criterion) {
    let b = viewflow_bench::setup();
    let split = Split::by_time(&b.prepared, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let examples = build_examples(&b.prepared, &split.train, 4, &mut rng);
    let batch = &examples[..64];
    c.bench_function("batch_gradients_64", |bench| {
        bench.iter(|| {
            let mut grads = b.model.weights.zeros_like();
            let mut stats = b.model.norm.clone();
            batch_gradients(
                &b.model,
                &mut stats,
                &b.prepared,
                batch,
                0.1,
                &mut rng,
                &mut grads,
            )
            .loss
        })
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let impressions: Vec<RankedImpression> = (0..2000)
        .map(|i| {
            let n = rng.random_range(2..30);
            let scores = (0..n).map(|_| rng.random::<f64>()).collect();
            let labels = (0..n).map(|k| u8::from(k == 0 || rng.random_bool(0.1))).collect();
            RankedImpression::new(format!("i{i}"), scores, labels)
        })
        .collect();
    c.bench_function("evaluate_2000_impressions", |bench| {
        bench.iter(|| evaluate(black_box(&impressions), true))
    });
}

criterion_group!(benches, ranking, encoding, training_step, metrics);
criterion_main!(benches);
