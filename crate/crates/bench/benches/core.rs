use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use eulercs_bench::{euler_matrix, measured_signal};
use eulercs_core::recovery::{basis_pursuit, omp, BasisPursuitParams};
use eulercs_core::{coherence, euler_square, normalize, GaloisField};

fn construction(c: &mut Criterion) {
    let mut g = c.benchmark_group("construction");
    g.bench_function("gf_256", |b| b.iter(|| GaloisField::new(2, black_box(8)).unwrap()));
    for (n, k) in [(11, 5), (23, 10), (60, 2), (64, 32)] {
        g.bench_with_input(BenchmarkId::new("euler_square", format!("{n},{k}")), &(n, k), |b, &(n, k)| {
            b.iter(|| euler_square(black_box(n), k).unwrap())
        });
    }
    g.finish();
}

fn coherence_check(c: &mut Criterion) {
    let mut g = c.benchmark_group("coherence");
    for (n, k) in [(11, 5), (23, 10), (49, 48)] {
        let m = euler_matrix(n, k);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{}x{}", m.rows(), m.cols())), &m, |b, m| {
            b.iter(|| coherence(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn recovery(c: &mut Criterion) {
    let mut g = c.benchmark_group("recovery");
    for (n, k, s) in [(11, 5, 2), (23, 10, 5), (23, 10, 40)] {
        let phi = normalize(&euler_matrix(n, k)).unwrap();
        let (y, _) = measured_signal(&phi, s, 1);
        g.bench_with_input(BenchmarkId::new("omp", format!("{n},{k} s={s}")), &y, |b, y| {
            b.iter(|| omp(&phi, black_box(y), s, 0.0).unwrap())
        });
    }
    let phi = normalize(&euler_matrix(11, 5)).unwrap();
    let (y, _) = measured_signal(&phi, 2, 1);
    let params = BasisPursuitParams::default();
    g.sample_size(20);
    g.bench_function("basis_pursuit 11,5 s=2", |b| b.iter(|| basis_pursuit(&phi, black_box(&y), &params).unwrap()));
    g.finish();
}

criterion_group!(benches, construction, coherence_check, recovery);
criterion_main!(benches);
