mod common;

use std::f64::consts::PI;

use common::*;
use sievelab::assembly::{
    assemble_limit_operator, assemble_nonlocal_interface, assemble_p1, assemble_robin_nonlocal, assemble_sieve_full,
    OperatorTag,
};
use sievelab::geometry::{audit_assumptions, quadrature_convergence_check, LimitDomain};
use sievelab::kernel::GammaQuadrature;
use sievelab::mesh::{mesh_sieve, GlueOptions};
use sievelab::solvers::{lobpcg, rayleigh_quotient, EigenOptions};

#[test]
fn p1_rayleigh_quotient_of_the_first_cosine() {
    let dom = LimitDomain::boundary(2, 1.0, 1.0).unwrap();
    let lm = uniform(&dom, 1.0 / 64.0);
    let op = assemble_p1(&lm.mesh).unwrap();
    // x^1 ranges over (-1/2, 1/2)
    let u = lm.interpolate(|x, _| (PI * (x + 0.5)).cos());
    let rq = rayleigh_quotient(&op, &u);
    assert!((rq / (PI * PI) - 1.0).abs() < 1e-3, "{rq}");
}

#[test]
fn unit_jump_has_unit_interface_energy() {
    let dom = interface_domain();
    let lm = uniform(&dom, 1.0 / 32.0);
    let block = assemble_nonlocal_interface(&lm, &unit_kernel(&dom)).unwrap();
    let mut u = vec![0.0; lm.vertex_count()];
    for &i in &lm.trace_plus {
        u[i] = 1.0;
    }
    let mut y = vec![0.0; u.len()];
    block.apply_add(&u, &mut y);
    let e: f64 = u.iter().zip(&y).map(|(a, b)| a * b).sum();
    assert!((e - 1.0).abs() < 1e-8, "{e}");
}

#[test]
fn robin_energy_of_the_tangential_coordinate() {
    // 2 (int x^2 - (int x)^2) = 1/6 over the unit segment
    let dom = boundary_domain();
    let lm = uniform(&dom, 1.0 / 32.0);
    let block = assemble_robin_nonlocal(&lm, &unit_kernel(&dom)).unwrap();
    let u = lm.interpolate(|x, _| x);
    let mut y = vec![0.0; u.len()];
    block.apply_add(&u, &mut y);
    let e: f64 = u.iter().zip(&y).map(|(a, b)| a * b).sum();
    assert!((e - 1.0 / 6.0).abs() < 1e-6, "{e}");
}

#[test]
fn sieve_without_passages_splits_in_two() {
    let dom = interface_domain();
    let p = plan(&dom, 0.25).without_passages();
    let glued = mesh_sieve(&p, &graded(&p, 1.0 / 16.0), &GlueOptions::default()).unwrap();
    assert!(glued.passages.is_empty());
    let op = assemble_sieve_full(&glued).unwrap();
    let res = lobpcg(&op, 3, &EigenOptions::default()).unwrap();
    assert_eq!(res.values[0], 0.0);
    assert!(res.values[1].abs() < 1e-8, "{:?}", res.values);
    assert!(res.values[2] > 1.0, "{:?}", res.values);
}

#[test]
fn riemann_sum_residual_at_one_eighth() {
    let dom = interface_domain();
    let k = unit_kernel(&dom);
    let plans = [plan(&dom, 0.125)];
    let quad = GammaQuadrature::midpoint(dom.gamma_extent(), 256);
    let r = quadrature_convergence_check(&plans, |_, _| 1.0, &k, &quad).unwrap();
    // 7 admitted cells, 49 unit couplings over |Gamma|^2 = 1
    assert!((r[0] - 0.234375).abs() < 1e-14, "{}", r[0]);
}

#[test]
fn limit_eigenvalue_matches_the_transcendental_root() {
    // antisymmetric mode cos(k (1 - |x^2|)) with k tan k = 2
    let dom = LimitDomain::interface(2, 1.0, 1.0, 1.0).unwrap();
    let lm = uniform(&dom, 1.0 / 32.0);
    let op = assemble_limit_operator(&lm, &unit_kernel(&dom)).unwrap();
    assert_eq!(op.tag, OperatorTag::Limit);
    let k = bisect(|k| k * k.tan() - 2.0, 0.1, 1.5);
    let res = lobpcg(&op, 3, &EigenOptions::default()).unwrap();
    assert!(
        (res.values[1] / (k * k) - 1.0).abs() < 1e-2,
        "{} vs {}",
        res.values[1],
        k * k
    );
}

#[test]
fn default_plans_pass_the_audit() {
    for dom in [interface_domain(), boundary_domain()] {
        for eps in [0.25, 0.125, 0.0625] {
            let r = audit_assumptions(&plan(&dom, eps));
            assert!(r.all_passed(), "{eps}: {:?}", r.failed_ids());
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
