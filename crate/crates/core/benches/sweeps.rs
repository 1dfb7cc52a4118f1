use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fomsynth::gain_margin::{margin_verify_with, optimal_single_pole, MarginSpec};
use fomsynth::par::ExecPolicy;
use fomsynth::rates::worst_case_rate_with;
use fomsynth::synthesis::{implicit_heavy_ball, RateBudget};
use fomsynth::transfer::TransferFunction;
use num_complex::Complex64;
use std::hint::black_box;

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn worst_case(c: &mut Criterion) {
    let budget = RateBudget::new(0.01, 100.0).unwrap();
    let spec = implicit_heavy_ball(&budget, 0.9).unwrap();
    let g = spec.scalar_tf().unwrap();
    let mut group = c.benchmark_group("worst_case_rate");
    for grid in [1_000, 20_000] {
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, grid), &grid, |b, &n| {
                b.iter(|| worst_case_rate_with(black_box(g), &budget, n, policy).unwrap())
            });
        }
    }
    group.finish();
}

fn margin_sweep(c: &mut Criterion) {
    let p = 1.25;
    let p0 = TransferFunction::from_coeffs(&[1.0], &[-p, 1.0]).unwrap();
    let spec = MarginSpec::symmetric(Complex64::new(p, 0.0), 80.0).unwrap();
    let (_, ctrl) = optimal_single_pole(&p0, &spec).unwrap();
    let mut group = c.benchmark_group("margin_verify");
    for grid in [1_000, 20_000] {
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, grid), &grid, |b, &n| {
                b.iter(|| {
                    margin_verify_with(&p0, black_box(&ctrl), spec.k1, spec.k2, n, policy).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = worst_case, margin_sweep
}
criterion_main!(benches);
