use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use novikov_core::metric::{tangent_norm, EtaSearch, NormOptions, TangentVector};
use novikov_core::nonlocal::{assemble_sources_with, kernel_accumulator};
use novikov_core::*;

fn datum() -> EulerDatum {
    EulerDatum::new(
        Profile::GaussianBump { amplitude: 0.6, center: -0.5, width: 1.2 },
        Profile::SechBump { amplitude: 0.5, center: 0.7, width: 1.0 },
    )
    .unwrap()
}

fn state(n: usize) -> (TransformedState, Vec<f64>) {
    direct_transform(&datum(), &Grid::new(-15.0, 15.0, n).unwrap()).unwrap()
}

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("exp_convolve");
    for n in [512, 2048, 8192] {
        let (s, _) = state(n);
        let acc = kernel_accumulator(&s, Quadrature::Corrected).unwrap();
        let p: Vec<f64> = s.u.iter().zip(&s.q).map(|(u, q)| u * q).collect();
        group.bench_with_input(BenchmarkId::new("scan", n), &n, |b, _| {
            b.iter(|| exp_convolve(black_box(&p), &acc, &s.grid).unwrap())
        });
        if n <= 2048 {
            group.bench_with_input(BenchmarkId::new("bruteforce", n), &n, |b, _| {
                b.iter(|| exp_convolve_bruteforce(black_box(&p), &acc, &s.grid).unwrap())
            });
        }
    }
    group.finish();
}

fn sources(c: &mut Criterion) {
    let mut group = c.benchmark_group("sources");
    let (s, _) = state(2048);
    for quad in [Quadrature::Trapezoid, Quadrature::Corrected] {
        group.bench_function(format!("{quad:?}"), |b| b.iter(|| assemble_sources_with(black_box(&s), quad).unwrap()));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let (s, y) = state(2048);
    let opts = EvolveOptions::default();
    c.bench_function("rk4_step/2048", |b| b.iter(|| rk4_step(black_box(&s), &y, 1e-3, &opts).unwrap()));
}

fn norm(c: &mut Criterion) {
    let (s, y) = state(512);
    let g = s.grid;
    let t = TangentVector {
        r: g.sample(|x| (-x * x).exp()),
        s: g.sample(|x| 0.5 * (-(x - 1.0).powi(2)).exp()),
        a: g.sample(|x| 0.3 * x * (-x * x).exp()),
        b: g.sample(|x| -0.2 * (-(x + 1.0).powi(2)).exp()),
        q: g.sample(|x| 0.1 * (-x * x / 4.0).exp()),
    };
    let mut group = c.benchmark_group("tangent_norm");
    for search in [EtaSearch::EtaZero, EtaSearch::CoarseDescent] {
        let o = NormOptions { search, ..Default::default() };
        group.bench_function(search.name(), |b| b.iter(|| tangent_norm(black_box(&s), &y, &t, &o).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, scan, sources, step, norm);
criterion_main!(benches);
