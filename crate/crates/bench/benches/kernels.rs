use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loopgeo_bench::{chart, great_circle, wobbly_parallel};
use loopgeo_core::jacobi::{jacobi_propagate, loop_monodromy, loop_start, DEFAULT_STEPS};
use loopgeo_core::loops::energy_and_gradient;
use loopgeo_core::morse::{assemble_second_variation, spectrum, Assembly};
use loopgeo_core::variational::{descend, DescentOptions};
use loopgeo_core::PenaltySchedule;

fn energy(c: &mut Criterion) {
    let sphere = chart("sphere");
    let mut group = c.benchmark_group("energy_and_gradient");
    for n in [64, 256, 1024] {
        let lp = great_circle(sphere.as_ref(), n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &lp, |b, lp| {
            b.iter(|| energy_and_gradient(sphere.as_ref(), black_box(lp)).unwrap())
        });
    }
    group.finish();
}

fn hessian(c: &mut Criterion) {
    let sphere = chart("sphere");
    let sched = PenaltySchedule::default();
    let mut group = c.benchmark_group("second_variation_spectrum");
    group.sample_size(10);
    for n in [64, 128, 256] {
        let lp = great_circle(sphere.as_ref(), n);
        for method in [Assembly::ExactDiscrete, Assembly::ContinuumQuadrature] {
            group.bench_with_input(BenchmarkId::new(format!("{method:?}"), n), &lp, |b, lp| {
                b.iter(|| {
                    let sv = assemble_second_variation(sphere.as_ref(), &sched, 0, black_box(lp), method).unwrap();
                    spectrum(&sv.matrix)
                })
            });
        }
    }
    group.finish();
}

fn jacobi(c: &mut Criterion) {
    let sphere = chart("sphere");
    let lp = great_circle(sphere.as_ref(), 256);
    let start = loop_start(sphere.as_ref(), &lp, false).unwrap();
    c.bench_function("jacobi_propagate_great_circle", |b| {
        b.iter(|| jacobi_propagate(sphere.as_ref(), black_box(&start), 1.0, DEFAULT_STEPS).unwrap())
    });
    c.bench_function("loop_monodromy_great_circle", |b| {
        b.iter(|| loop_monodromy(sphere.as_ref(), black_box(&lp), DEFAULT_STEPS).unwrap())
    });
}

fn descent(c: &mut Criterion) {
    let funnel = chart("funnel");
    let sched = PenaltySchedule::default();
    let lp = wobbly_parallel(funnel.as_ref(), 64);
    let opts = DescentOptions::default();
    let mut group = c.benchmark_group("descent");
    group.sample_size(10);
    group.bench_function("funnel_to_waist", |b| {
        b.iter(|| descend(funnel.as_ref(), &sched, 0, black_box(&lp), &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, energy, hessian, jacobi, descent);
criterion_main!(benches);
