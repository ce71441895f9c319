use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use branchforge_bench::{dims, random_batches, random_dumps, random_matrix, random_rdms, rng};
use branchforge_core::model::{build_model, loss_and_gradients};
use branchforge_core::rsa::{compute_dds, compute_rdm_stack, linear_cka};
use branchforge_core::search::{enumerate_plans, select_architecture};
use branchforge_core::train::train_step;
use branchforge_core::{CostModel, LossWeights, PlanMode, SharingPlan, TrainConfig};

fn affinity(c: &mut Criterion) {
    let mut group = c.benchmark_group("affinity");
    for k in [50, 200] {
        let dump = &random_dumps(1, 1, k, 64, 1)[0];
        group.bench_with_input(BenchmarkId::new("dds", k), &k, |b, _| {
            b.iter(|| compute_dds(black_box(dump)).unwrap())
        });
        let mut r = rng(2);
        let x = random_matrix(&mut r, k, k);
        let y = random_matrix(&mut r, k, k);
        group.bench_with_input(BenchmarkId::new("cka", k), &k, |b, _| {
            b.iter(|| linear_cka(black_box(&x), black_box(&y)).unwrap())
        });
    }
    let dumps = random_dumps(5, 4, 60, 32, 3);
    group.bench_function("rdm_stack_5x4", |b| {
        b.iter(|| compute_rdm_stack(black_box(&dumps)).unwrap())
    });
    group.finish();
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    let costs = CostModel {
        backbone_latency: 4.0,
        module_latencies: vec![1.0, 1.0, 1.0],
        head_latency: 0.5,
        single_inference_time: None,
    };
    for (n, mode) in [
        (4, PlanMode::Unconstrained),
        (5, PlanMode::Unconstrained),
        (6, PlanMode::Tree),
    ] {
        let rdms = random_rdms(n, 3, 4);
        group.bench_function(format!("enumerate_{mode}_{n}x3"), |b| {
            b.iter(|| enumerate_plans(n, 3, mode).unwrap().count())
        });
        group.bench_function(format!("select_{mode}_{n}x3"), |b| {
            b.iter(|| {
                select_architecture(
                    enumerate_plans(n, 3, mode).unwrap(),
                    &rdms,
                    &costs,
                    Some(0.7),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let mut group = c.benchmark_group("model");
    let d = dims(4, 64, 3);
    let batches = random_batches(&d, 32, 5);
    let weights = LossWeights::default();
    for (name, plan) in [
        ("shared", SharingPlan::fully_shared(4, 3)),
        ("split", SharingPlan::fully_split(4, 3)),
    ] {
        let model = build_model(&plan, &d, 0).unwrap();
        group.bench_function(format!("forward_backward_{name}"), |b| {
            b.iter(|| loss_and_gradients(&model, black_box(&batches[&0]), &weights).unwrap())
        });
        let config = TrainConfig::uniform(4, 0.01, 1, 32);
        group.bench_function(format!("train_step_{name}"), |b| {
            let mut m = model.clone();
            b.iter(|| train_step(&mut m, black_box(&batches), &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, affinity, search, model);
criterion_main!(benches);
