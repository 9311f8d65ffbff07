use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use olle_bench::{small_corpus, user_population};
use olle_core::aggregate::{aggregate_population, AggregationConfig, GroupBy, PartialAggregate};
use olle_core::analyze::{gender_gap, spearman_bootstrap, GapConfig, GapInput, GenderUsers};
use olle_core::corpus::{ingest, IngestConfig};
use olle_core::fixtures::LOFF_FIXTURES;
use olle_core::lexicon::{detect_loff_range, DetectConfig};

fn detection(c: &mut Criterion) {
    let curve = LOFF_FIXTURES[0].curve();
    let cfg = DetectConfig::default();
    let mut g = c.benchmark_group("detect");
    g.sample_size(10);
    g.bench_function("loff_range_200k_ranks", |b| {
        b.iter(|| detect_loff_range(black_box(&curve), &cfg).unwrap())
    });
    g.finish();
}

fn ingestion(c: &mut Criterion) {
    let (posts, lexicons, spec) = small_corpus(5);
    let cfg = IngestConfig {
        languages: spec.languages.clone(),
        ..IngestConfig::default()
    };
    let mut g = c.benchmark_group("ingest");
    g.sample_size(10);
    g.bench_function(format!("{}_posts", posts.len()), |b| {
        b.iter_batched(
            || posts.clone(),
            |p| ingest(p.into_iter().map(Ok), &cfg, &lexicons).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn aggregation(c: &mut Criterion) {
    let stats = user_population(100_000, 1);
    let cfg = AggregationConfig::default();
    let mut g = c.benchmark_group("aggregate");
    g.bench_function("region_100k_users", |b| {
        b.iter(|| aggregate_population(black_box(&stats), GroupBy::REGION, &cfg))
    });
    g.bench_function("merge_8_shards", |b| {
        b.iter(|| {
            let mut shards: Vec<PartialAggregate> = (0..8)
                .map(|_| PartialAggregate::new(GroupBy::GENDER))
                .collect();
            for (i, s) in stats.iter().enumerate() {
                shards[i % 8].add(s);
            }
            let mut total = PartialAggregate::new(GroupBy::GENDER);
            for s in &shards {
                total.merge(s);
            }
            total.finish(&cfg)
        })
    });
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v + ((i * 13) % 17) as f64)
        .collect();
    let stats = user_population(4000, 2);
    let (female, male): (Vec<_>, Vec<_>) = stats.iter().partition(|s| s.user_id.len() % 2 == 0);
    let input = GapInput {
        country: "C00".into(),
        language: "en".into(),
        female_w_bar: female.iter().map(|s| s.w_u).sum::<f64>() / female.len() as f64,
        male_w_bar: male.iter().map(|s| s.w_u).sum::<f64>() / male.len() as f64,
        users: Some(GenderUsers {
            female: female.iter().map(|s| s.w_u).collect(),
            male: male.iter().map(|s| s.w_u).collect(),
        }),
    };
    let inputs = vec![
        input.clone(),
        GapInput {
            country: "C01".into(),
            ..input
        },
    ];
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("spearman_n100_1000", |b| {
        b.iter(|| spearman_bootstrap(black_box(&x), &y, 1000, 0).unwrap())
    });
    g.bench_function("gender_gap_2x4000_1000", |b| {
        b.iter(|| gender_gap(black_box(&inputs), |w, _| Ok(w), &GapConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, detection, ingestion, aggregation, bootstrap);
criterion_main!(benches);
