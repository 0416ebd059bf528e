use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use perspectivesx_bench::*;
use perspectivesx_core::lti::{self, outcomes, NonceStore};
use perspectivesx_core::topics::{self, gibbs::GibbsSampler, TrainParams};
use perspectivesx_core::*;
use std::hint::black_box;

fn lda(c: &mut Criterion) {
    let (docs, vocabulary) = token_corpus(200, 40, 300, 5, 11);
    let params = TrainParams {
        topics: 5,
        alpha: 10.0,
        beta: 0.01,
        iterations: 100,
        seed: 3,
    };
    let mut group = c.benchmark_group("lda");
    group.sample_size(10);
    group.bench_function("train_200x40_k5_100it", |b| {
        b.iter(|| topics::train(black_box(&docs), &vocabulary, &params).unwrap())
    });
    group.finish();

    let tokens: Vec<Vec<usize>> = docs.iter().map(|d| d.tokens.clone()).collect();
    let mut sampler = GibbsSampler::new(&tokens, vocabulary.len(), 5, 10.0, 0.01, 3);
    c.bench_function("lda/sweep_8000_tokens", |b| b.iter(|| sampler.sweep()));
}

fn knowledge_base(c: &mut Criterion) {
    let (service, activity, lineage) = populated_service(500, 5);
    let viewer = Viewer::learner("reader");
    let mut text = KbQuery::new(lineage.clone(), viewer.clone());
    text.text = Some("brand loyalty".into());
    c.bench_function("kb/query_text_500", |b| b.iter(|| service.query(black_box(&text)).unwrap()));

    let mut filtered = KbQuery::new(lineage.clone(), viewer.clone());
    filtered.tags = Some(["price".to_owned()].into());
    filtered.perspective_id = Some(PerspectiveId::new("swot-threats"));
    c.bench_function("kb/query_tag_perspective_500", |b| {
        b.iter(|| service.query(black_box(&filtered)).unwrap())
    });

    let first = service.with_db(|db| {
        db.contributions
            .values()
            .find(|c| c.activity_id == activity)
            .unwrap()
            .id
            .clone()
    });
    c.bench_function("kb/related_500", |b| b.iter(|| service.related(black_box(&first), &viewer).unwrap()));
}

fn lti_launch(c: &mut Criterion) {
    let now = 1_700_000_000;
    let launch = signed_launch("bench", "bench-secret", "n-1", now);
    c.bench_function("lti/verify_launch", |b| {
        b.iter_batched(
            NonceStore::default,
            |mut nonces| {
                lti::verify_launch(black_box(&launch), |_| Some("bench-secret".into()), &mut nonces, now).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("lti/build_replace_result", |b| {
        b.iter(|| outcomes::build_replace_result(black_box("course:learner:42"), black_box(0.75)).unwrap())
    });
}

criterion_group!(benches, lda, knowledge_base, lti_launch);
criterion_main!(benches);
