use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use newsflow_core::baselines::{nbc_score, nbc_train, TrainDoc};
use newsflow_core::corpus::tokenize;
use newsflow_core::embedding::{embed_static, OovPolicy};
use newsflow_core::evaluation::percentile_thresholds;
use newsflow_core::rng::SeededStream;
use newsflow_core::synthetic::{generate, SyntheticSpec};
use newsflow_core::workflow::compute_returns;
use newsflow_core::{HeadlineEmbedding, HorizonConfig, RnnConfig, RnnModel};

fn corpus() -> newsflow_core::synthetic::SyntheticCorpus {
    generate(&SyntheticSpec { n_stocks: 50, n_days: 60, headlines_per_day: 100, ..SyntheticSpec::default() })
        .expect("valid spec")
}

fn labeling(c: &mut Criterion) {
    let corpus = corpus();
    c.bench_function("forward_returns_6k_headlines", |b| {
        b.iter(|| {
            compute_returns(
                black_box(&corpus.news),
                &corpus.prices,
                &corpus.market,
                &corpus.calendar,
                &HorizonConfig::default(),
            )
            .unwrap()
        })
    });
}

fn baselines(c: &mut Criterion) {
    let corpus = corpus();
    let tokens: Vec<Vec<String>> = corpus.news.iter().map(|n| tokenize(&n.headline)).collect();
    let docs: Vec<TrainDoc<'_>> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| TrainDoc { tokens: t, label: i % 2 == 0, ret: 0.0 })
        .collect();
    c.bench_function("nbc_train_6k", |b| b.iter(|| nbc_train(black_box(&docs), 1.0).unwrap()));
    let model = nbc_train(&docs, 1.0).unwrap();
    c.bench_function("nbc_score_6k", |b| {
        b.iter(|| tokens.iter().map(|t| nbc_score(&model, t)).sum::<f64>())
    });
}

fn recurrent(c: &mut Criterion) {
    let corpus = corpus();
    let batch: Vec<(HeadlineEmbedding, bool)> = corpus
        .news
        .iter()
        .take(32)
        .enumerate()
        .map(|(i, n)| {
            let x = embed_static(n.id, &tokenize(&n.headline), &corpus.table, OovPolicy::Zero).unwrap();
            (x, i % 2 == 0)
        })
        .collect();
    let refs: Vec<(&HeadlineEmbedding, bool)> = batch.iter().map(|(x, y)| (x, *y)).collect();
    let model = RnnModel::new(RnnConfig::default(), corpus.table.dim()).unwrap();
    c.bench_function("lstm_16x8_predict_32", |b| {
        b.iter(|| refs.iter().map(|(x, _)| model.predict(x).unwrap()).sum::<f64>())
    });
    c.bench_function("lstm_16x8_gradient_32", |b| b.iter(|| model.gradient(black_box(&refs)).unwrap()));
}

fn evaluation(c: &mut Criterion) {
    let mut rng = SeededStream::new(1);
    let scores: Vec<f64> = (0..100_000).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    c.bench_function("percentile_thresholds_100k", |b| {
        b.iter(|| percentile_thresholds(black_box(&scores), 0.5).unwrap())
    });
}

criterion_group!(benches, labeling, baselines, recurrent, evaluation);
criterion_main!(benches);
