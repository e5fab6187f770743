use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dominance_core::aggregate::Combo;
use dominance_core::ensemble::{train_logreg, FeatureVector, Sample, TrainConfig};
use dominance_core::pipeline::aggregate_pair;
use dominance_core::quantity::{parse_count, select_confident_count};
use dominance_core::stats::{one_sided_ttest, student_t_sf};
use dominance_core::{AggregationParams, Prediction, Scope, SignalTable, Source, SubgroupScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stats(c: &mut Criterion) {
    c.bench_function("student_t_sf", |b| {
        b.iter(|| student_t_sf(black_box(1.7), black_box(13.4)))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<f64> = (0..19).map(|_| rng.random_range(1.0..1e6)).collect();
    let bv: Vec<f64> = (0..19).map(|_| rng.random_range(1.0..1e6)).collect();
    c.bench_function("welch_ttest_19", |b| {
        b.iter(|| one_sided_ttest(black_box(&a), black_box(&bv), 0.05))
    });
}

fn quantity(c: &mut Criterion) {
    c.bench_function("parse_count", |b| {
        b.iter(|| parse_count(black_box("There are an estimated 1.3 million rivers on Earth.")))
    });
    let snippets: Vec<(u32, String)> = (0..50)
        .map(|i| {
            (
                i + 1,
                format!(
                    "Experts put the total at about {} thousand, up from {i} in 1990.",
                    240 + i % 7
                ),
            )
        })
        .collect();
    c.bench_function("select_confident_count_50", |b| {
        b.iter(|| select_confident_count(black_box(&snippets)))
    });
}

fn aggregation(c: &mut Criterion) {
    let scheme = SubgroupScheme::g20();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut table = SignalTable::new();
    for class in ["a", "b"] {
        for s in Source::ALL {
            table.set(class, s, &Scope::Root, Some(rng.random_range(1.0..1e7)));
            for id in scheme.ids() {
                table.set(class, s, &Scope::subgroup(id), Some(rng.random_range(1.0..1e5)));
            }
        }
    }
    let params = AggregationParams::default();
    c.bench_function("aggregate_pair_g20", |b| {
        b.iter(|| aggregate_pair(black_box(&table), "a", "b", &scheme, &params, &Source::ALL))
    });
}

fn logreg(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<Sample> = (0..800)
        .map(|_| {
            let x = FeatureVector([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let z = 0.5 * x.0[0] + x.0[1] + 2.0 * x.0[2] + rng.random_range(-0.5..0.5);
            let label = if z > 0.0 {
                Prediction::Greater
            } else {
                Prediction::Smaller
            };
            Sample { x, label }
        })
        .collect();
    let config = TrainConfig::default();
    c.bench_function("train_logreg_800_cv5", |b| {
        b.iter_batched(
            || samples.clone(),
            |s| train_logreg(&s, Combo::All, &config).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, stats, quantity, aggregation, logreg);
criterion_main!(benches);
