use adjscore_bench::{gamma, logistic};
use adjscore_core::datasets::clotting_spec;
use adjscore_core::engine::{fit, FitControl, Method};
use adjscore_core::inference::theorem1_check;
use adjscore_core::separation::detect_separation;
use adjscore_core::sim::{run_study, StudyDesign};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const METHODS: [Method; 4] = [Method::Ml, Method::MeanBr, Method::MedianBr, Method::MixedBr];

fn clotting(c: &mut Criterion) {
    let spec = clotting_spec();
    let control = FitControl::default();
    let mut group = c.benchmark_group("clotting");
    for method in METHODS {
        group.bench_function(method.name(), |b| b.iter(|| fit(black_box(&spec), method, &control).unwrap()));
    }
    group.finish();
}

fn scaling(c: &mut Criterion) {
    let control = FitControl::default();
    let mut group = c.benchmark_group("logistic_p5");
    for n in [100usize, 1000, 5000] {
        let spec = logistic(n, 5);
        for method in [Method::Ml, Method::MeanBr, Method::MedianBr] {
            group.bench_with_input(BenchmarkId::new(method.name(), n), &spec, |b, s| {
                b.iter(|| fit(s, method, &control).unwrap())
            });
        }
    }
    group.finish();
    let mut group = c.benchmark_group("gamma_p4");
    for n in [100usize, 1000] {
        let spec = gamma(n, 4);
        for method in [Method::Ml, Method::MixedBr] {
            group.bench_with_input(BenchmarkId::new(method.name(), n), &spec, |b, s| {
                b.iter(|| fit(s, method, &control).unwrap())
            });
        }
    }
    group.finish();
}

fn separation(c: &mut Criterion) {
    let spec = logistic(500, 6);
    c.bench_function("detect_separation n=500 p=6", |b| {
        b.iter(|| detect_separation(black_box(&spec.x), &spec.y, &spec.m).unwrap())
    });
}

fn theorem1(c: &mut Criterion) {
    c.bench_function("theorem1 grid nu<=20", |b| {
        b.iter(|| {
            for nu in 1..=20 {
                for k in 0..175 {
                    black_box(theorem1_check(nu, 0.001 + 0.002 * k as f64).unwrap());
                }
            }
        })
    });
}

fn study(c: &mut Criterion) {
    let spec = clotting_spec();
    let ml = fit(&spec, Method::Ml, &FitControl::default()).unwrap();
    let design = StudyDesign {
        spec,
        true_beta: ml.beta,
        true_phi: ml.phi,
        replicates: 200,
        seed: 1,
        methods: METHODS.to_vec(),
        ci_level: 0.95,
    };
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("clotting R=200", |b| b.iter(|| run_study(&design).unwrap()));
    group.finish();
}

criterion_group!(benches, clotting, scaling, separation, theorem1, study);
criterion_main!(benches);
