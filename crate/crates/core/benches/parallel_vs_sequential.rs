//! Single-thread versus full-pool timings of the data-parallel kernels.
//!
//! Built with `--no-default-features` both variants run the sequential code
//! path, which gives the baseline for the rayon overhead.

use bnnbench_core::datasets::{generate, TaskId, TaskSpec};
use bnnbench_core::metrics::{ksd, mmd, KernelSpec, PosteriorScore};
use bnnbench_core::model::{MlpArchitecture, OptConfig, ParamVector, PosteriorSpec, Target};
use bnnbench_core::par;
use bnnbench_core::rng::{rng_from_seed, std_normal};
use bnnbench_core::samplers::deep_ensemble;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn posterior() -> PosteriorSpec {
    let bundle = generate(&TaskSpec::standard(TaskId::Af1), 1, 1).unwrap();
    let arch = MlpArchitecture::with_hidden(1, &[20, 20], 1).unwrap();
    PosteriorSpec::new(arch, bundle.training_sets[0].clone(), bundle.task.noise_sigma).unwrap()
}

fn cloud(n: usize, dim: usize, seed: u64) -> Vec<ParamVector> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| ParamVector((0..dim).map(|_| std_normal(&mut rng)).collect()))
        .collect()
}

fn widths() -> [(&'static str, Option<usize>); 2] {
    [("sequential", Some(1)), ("parallel", None)]
}

fn bench_mmd(c: &mut Criterion) {
    let post = posterior();
    let (a, b) = (cloud(400, post.dim(), 1), cloud(400, post.dim(), 2));
    let mut group = c.benchmark_group("mmd_400x400");
    for (name, workers) in widths() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| par::with_workers(workers, || mmd(&a, &b).unwrap()))
        });
    }
    group.finish();
}

fn bench_ksd(c: &mut Criterion) {
    let post = posterior();
    let samples = cloud(200, post.dim(), 3);
    let kernel = KernelSpec::imq(10.0);
    let mut group = c.benchmark_group("ksd_200");
    for (name, workers) in widths() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| par::with_workers(workers, || ksd(&samples, &PosteriorScore(&post), &kernel).unwrap()))
        });
    }
    group.finish();
}

fn bench_ensemble(c: &mut Criterion) {
    let post = posterior();
    let opt = OptConfig {
        iterations: 200,
        ..OptConfig::default()
    };
    let mut group = c.benchmark_group("ensemble_8x200");
    group.sample_size(10);
    for (name, workers) in widths() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| par::with_workers(workers, || deep_ensemble(&post, 8, &opt, 5).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mmd, bench_ksd, bench_ensemble);
criterion_main!(benches);
