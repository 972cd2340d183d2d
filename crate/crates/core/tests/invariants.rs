mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use sievelab::assembly::{footprint_mean_weights, OperatorPair};
use sievelab::geometry::{build_sieve_plan, DLaw, SievePlan};
use sievelab::harness::{identify_j, lift_l};
use sievelab::kernel::InterfaceKernel;
use sievelab::solvers::{solve_shifted, CgOptions};
use sievelab::sparse::SparseSym;

fn ops() -> &'static [OperatorPair] {
    static OPS: OnceLock<Vec<OperatorPair>> = OnceLock::new();
    OPS.get_or_init(|| common::all_operators(1.0 / 16.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic pseudo-random vector of length `n` from `seed`.
fn vector(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn constants_are_in_every_kernel() {
    for op in ops() {
        assert!(op.constant_defect() < 1e-10, "{}: {}", op.tag, op.constant_defect());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forms_are_symmetric_and_nonnegative(which in 0usize..6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let op = &ops()[which];
        let (x, y) = (vector(op.dim(), s1), vector(op.dim(), s2));
        let (ax, ay) = (op.apply_form(&x), op.apply_form(&y));
        let scale = dot(&x, &ax).abs() + dot(&y, &ay).abs() + 1.0;
        prop_assert!((dot(&y, &ax) - dot(&x, &ay)).abs() <= 1e-12 * scale);
        prop_assert!(op.energy(&x) >= -1e-12 * scale);
        let (mx, my) = (op.apply_mass(&x), op.apply_mass(&y));
        prop_assert!((dot(&y, &mx) - dot(&x, &my)).abs() <= 1e-12 * scale);
        prop_assert!(dot(&x, &mx) > 0.0);
    }

    #[test]
    fn resolvent_contracts(which in 0usize..6, seed in any::<u64>(), sigma in 0.1f64..10.0) {
        let op = &ops()[which];
        let f = vector(op.dim(), seed);
        let (u, _) = solve_shifted(op, &f, sigma, &CgOptions::default()).unwrap();
        prop_assert!(sigma * op.mass_norm(&u) <= op.mass_norm(&f) * (1.0 + 1e-10));
    }

    #[test]
    fn lift_then_identify_is_identity(v in prop::collection::vec(-1e3f64..1e3, 1..64), extra in 0usize..32) {
        let lifted = lift_l(&v, v.len() + extra).unwrap();
        prop_assert!(lifted[v.len()..].iter().all(|x| *x == 0.0));
        prop_assert_eq!(identify_j(&lifted, v.len()).unwrap(), v);
    }

    #[test]
    fn footprint_means_sum_to_one(n in 3usize..40, c in -0.4f64..0.4, r in 1e-4f64..0.1) {
        let xs: Vec<f64> = (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect();
        let trace: Vec<usize> = (0..n).map(|i| 10 + i).collect();
        let w = footprint_mean_weights(&xs, &trace, c, r).unwrap();
        let total: f64 = w.iter().map(|(_, g)| g).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|(i, g)| *g >= 0.0 && trace.contains(i)));
    }

    #[test]
    fn plan_couplings_fill_the_passage_volume(k in 2u32..6, value in 0.05f64..1.0) {
        let dom = common::interface_domain();
        let eps = 0.5f64.powi(k as i32);
        let kernel = InterfaceKernel::constant(value, dom.gamma_extent()).unwrap();
        let plan = build_sieve_plan(&dom, eps, DLaw::cubic(), &kernel).unwrap();
        prop_assert_eq!(plan.passages.len() * 2, plan.holes.len());
        for p in &plan.passages {
            // subcell area times the kernel
            prop_assert!((p.coupling - value * eps * eps).abs() < 1e-12 * value);
            prop_assert!((p.coupling * p.height - plan.holes[p.a].area).abs() < 1e-15);
        }
        let back = SievePlan::from_json(&plan.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, plan);
    }

    #[test]
    fn matrix_market_round_trip(which in 0usize..6) {
        let m = &ops()[which].stiffness;
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let back = SparseSym::read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        let x = vector(m.dim(), which as u64);
        let (a, b) = (m.apply(&x), back.apply(&x));
        prop_assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + p.abs())));
    }
}
