use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dgocp_core::assembly::{assemble_bh, Discretization};
use dgocp_core::pdas::PdasOptions;
use dgocp_core::problems::example_square;
use dgocp_core::study::solve_nested;

fn assembly(c: &mut Criterion) {
    let p = example_square();
    let mut g = c.benchmark_group("assembly");
    for level in [2, 3, 4] {
        let mesh = Arc::new(p.mesh(level).unwrap());
        g.bench_with_input(BenchmarkId::new("operators", level), &mesh, |b, mesh| {
            b.iter(|| Discretization::new(mesh.clone(), p.coeffs.clone(), p.sigma, &*p.g).unwrap())
        });
        let disc = Discretization::new(mesh, p.coeffs.clone(), p.sigma, &*p.g).unwrap();
        g.bench_with_input(BenchmarkId::new("reduced_hessian", level), &disc, |b, d| {
            b.iter(|| assemble_bh(black_box(d.stiffness()), d.mass(), p.beta).unwrap())
        });
    }
    g.finish();
}

fn pdas(c: &mut Criterion) {
    let p = example_square();
    let mut g = c.benchmark_group("pdas");
    g.sample_size(10);
    for level in [2, 3] {
        g.bench_with_input(BenchmarkId::new("nested_solve", level), &level, |b, &l| {
            b.iter(|| solve_nested(&p, l, &PdasOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, pdas);
criterion_main!(benches);
