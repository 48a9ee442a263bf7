//! Rayon-backed helpers against the same code pinned to one thread.
//!
//! Build with `--no-default-features` to compile rayon out entirely; both
//! variants then measure the sequential path.

use std::time::Duration;

use captain_core::arpose::{kmeans, KMeansConfig};
use captain_core::cade::{train_mcmsvm, SvmParams};
use captain_core::index::{CompositionModel, Decomposer};
use captain_core::annotation::Category;
use captain_core::retrieval::{query, UspWeights};
use captain_core::{par, synthetic};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn both<F: FnMut()>(group: &mut criterion::BenchmarkGroup<'_, criterion::measurement::WallTime>, size: usize, mut f: F) {
    group.bench_with_input(BenchmarkId::new("parallel", size), &size, |b, _| b.iter(&mut f));
    group.bench_with_input(BenchmarkId::new("sequential", size), &size, |b, _| {
        b.iter(|| par::sequential(&mut f))
    });
}

fn ranking(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank");
    group.sample_size(20).measurement_time(Duration::from_secs(5));
    let mut rng = synthetic::rng(1);
    let q = synthetic::random_record(&mut rng, "q");
    let w = UspWeights::uniform();
    for n in [1_000, 10_000] {
        let model = synthetic::random_model(2, n);
        both(&mut group, n, || {
            std::hint::black_box(query(&model, &q, &w, 20).unwrap());
        });
    }
    group.finish();
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    let spec = synthetic::BundleSpec {
        width: 160,
        height: 120,
        ..synthetic::BundleSpec::default()
    };
    let bundles = synthetic::random_corpus(3, 64, &spec);
    let dec = Decomposer::default();
    both(&mut group, bundles.len(), || {
        std::hint::black_box(CompositionModel::build_from_bundles(&bundles, &dec).unwrap());
    });
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    let mut rng = synthetic::rng(4);
    let data: Vec<Vec<f64>> = synthetic::gaussian_blobs(&mut rng, 8, 100, 64, 10.0).into_iter().map(|(x, _)| x).collect();
    let config = KMeansConfig::new(8, 4, 5);
    both(&mut group, data.len(), || {
        std::hint::black_box(kmeans(&data, &config).unwrap());
    });
    group.finish();
}

fn svm(c: &mut Criterion) {
    let mut group = c.benchmark_group("svm_train");
    group.sample_size(10);
    let mut rng = synthetic::rng(6);
    let samples: Vec<(Vec<f64>, Category)> = synthetic::gaussian_blobs(&mut rng, 10, 40, 40, 6.0)
        .into_iter()
        .map(|(x, c)| (x, Category::ALL[c]))
        .collect();
    let params = SvmParams::default();
    both(&mut group, samples.len(), || {
        std::hint::black_box(train_mcmsvm(&samples, &params).unwrap());
    });
    group.finish();
}

criterion_group!(benches, ranking, build, clustering, svm);
criterion_main!(benches);
