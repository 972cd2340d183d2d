use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sievelab::assembly::{assemble_limit_operator, assemble_reduced_sieve, assemble_sieve_full};
use sievelab::geometry::{build_sieve_plan, DLaw, LimitDomain};
use sievelab::kernel::InterfaceKernel;
use sievelab::mesh::{mesh_limit_domain, mesh_sieve, GlueOptions, Grading};
use sievelab::solvers::{lobpcg, solve_shifted, CgOptions, EigenOptions};

fn setup() -> (LimitDomain, InterfaceKernel) {
    let dom = LimitDomain::unit_square();
    let k = InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap();
    (dom, k)
}

fn assembly(c: &mut Criterion) {
    let (dom, k) = setup();
    let lm = mesh_limit_domain(&dom, 1.0 / 64.0, &Grading::none(), 15.0).unwrap();
    let plan = build_sieve_plan(&dom, 0.0625, DLaw::cubic(), &k).unwrap();
    let mut g = c.benchmark_group("assembly");
    g.bench_function("mesh h0=1/64", |b| {
        b.iter(|| mesh_limit_domain(black_box(&dom), 1.0 / 64.0, &Grading::none(), 15.0).unwrap())
    });
    g.bench_function("limit h0=1/64", |b| {
        b.iter(|| assemble_limit_operator(black_box(&lm), &k).unwrap())
    });
    g.bench_function("reduced eps=1/16", |b| {
        b.iter(|| assemble_reduced_sieve(black_box(&lm), &plan).unwrap())
    });
    let coarse = build_sieve_plan(&dom, 0.25, DLaw::cubic(), &k).unwrap();
    let graded = mesh_limit_domain(&dom, 1.0 / 32.0, &Grading::for_plan(&coarse, 4, 3), 15.0).unwrap();
    g.bench_function("glued eps=1/4", |b| {
        b.iter(|| {
            let glued = mesh_sieve(black_box(&coarse), &graded, &GlueOptions::default()).unwrap();
            assemble_sieve_full(&glued).unwrap()
        })
    });
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let (dom, k) = setup();
    let lm = mesh_limit_domain(&dom, 1.0 / 64.0, &Grading::none(), 15.0).unwrap();
    let limit = assemble_limit_operator(&lm, &k).unwrap();
    let plan = build_sieve_plan(&dom, 0.0625, DLaw::cubic(), &k).unwrap();
    let reduced = assemble_reduced_sieve(&lm, &plan).unwrap();
    let f = lm.interpolate(|x, y| x.signum() + y);
    let mut y = vec![0.0; limit.dim()];

    let mut g = c.benchmark_group("solvers");
    g.bench_function("form matvec limit", |b| {
        b.iter(|| limit.apply_form_into(black_box(&f), &mut y))
    });
    g.bench_function("form matvec reduced", |b| {
        b.iter(|| reduced.apply_form_into(black_box(&f), &mut y))
    });
    g.bench_function("resolvent limit", |b| {
        b.iter(|| solve_shifted(&limit, black_box(&f), 1.0, &CgOptions::default()).unwrap())
    });
    g.bench_function("resolvent reduced", |b| {
        b.iter(|| solve_shifted(&reduced, black_box(&f), 1.0, &CgOptions::default()).unwrap())
    });
    g.sample_size(10);
    g.bench_function("lobpcg k=6 reduced", |b| {
        b.iter(|| lobpcg(&reduced, 6, &EigenOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, assembly, solvers);
criterion_main!(benches);
