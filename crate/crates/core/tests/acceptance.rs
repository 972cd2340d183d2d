//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Built with `harness = false` so the lines always show.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use sievelab::assembly::{assemble_limit_operator, assemble_p1, assemble_reduced_sieve, OperatorPair};
use sievelab::geometry::{audit_assumptions, build_sieve_plan, quadrature_convergence_check, DLaw, LimitDomain};
use sievelab::harness::{
    cross_fidelity_lambda1, run_eigen_convergence, run_heat_convergence, run_passage_energy_check,
    run_resolvent_convergence, run_robin_convergence, EpsilonSchedule, Experiment, Model, Sweep,
};
use sievelab::kernel::GammaQuadrature;
use sievelab::report::write_csv;
use sievelab::semigroup::{heat_evolve, HeatOptions};
use sievelab::solvers::{lobpcg, solve_shifted, CgOptions, EigenOptions};
use sievelab::RunConfig;

type Outcome = sievelab::Result<(bool, String)>;
type Run = fn(&Sweep) -> sievelab::Result<Experiment>;

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_dev(v: &[f64], c: f64) -> f64 {
    v.iter().fold(0.0, |a, x| a.max((x - c).abs()))
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let ops = all_operators(1.0 / 16.0);
    let cg = CgOptions::default();
    let heat = HeatOptions {
        t_final: 0.5,
        steps: 64,
        samples: 8,
        theta: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ok = true;
    let mut worst = [0.0f64; 4];
    for op in &ops {
        let ones = vec![1.0; op.dim()];
        let (u, _) = solve_shifted(op, &ones, 1.0, &cg)?;
        let stationary = heat_evolve(op, &ones, &heat, &cg)?;
        let drift = stationary.states.iter().map(|s| max_dev(s, 1.0)).fold(0.0, f64::max);
        let f = random_vector(&mut rng, op.dim());
        let diag = heat_evolve(op, &f, &heat, &cg)?.diagnostics(op);
        let scale = op.apply_mass(&f).iter().map(|v| v.abs()).sum::<f64>();
        let mass = diag.iter().map(|d| (d.mass - diag[0].mass).abs()).fold(0.0, f64::max) / scale;
        let got = [max_dev(&u, 1.0), op.constant_defect(), drift, mass];
        for (w, g) in worst.iter_mut().zip(got) {
            *w = w.max(g);
        }
        ok &= got[0] <= 1e-12 && got[1] <= 1e-10 && got[2] <= 1e-12 && got[3] <= 1e-10;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        ok && secs < 1.0,
        format!(
            "{} operators, resolvent dev {:.1e}, (A+B)1 {:.1e}, heat drift {:.1e}, mass drift {:.1e}, {secs:.2} s",
            ops.len(),
            worst[0],
            worst[1],
            worst[2],
            worst[3]
        ),
    ))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
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

fn oracle_eigenvalues() -> Outcome {
    let start = Instant::now();
    let h0 = 1.0 / 64.0;
    let opts = EigenOptions::default();
    let pi2 = PI * PI;

    let square = LimitDomain::boundary(2, 1.0, 1.0)?;
    let neumann = assemble_p1(&uniform(&square, h0).mesh)?;
    let l1 = lobpcg(&neumann, 2, &opts)?.values[1];

    // the antisymmetric mode cos(k (1 - |x^2|)) needs depth 1 on both sides
    let dom = LimitDomain::interface(2, 1.0, 1.0, 1.0)?;
    let limit = assemble_limit_operator(&uniform(&dom, h0), &unit_kernel(&dom))?;
    let lam = lobpcg(&limit, 6, &opts)?.values;
    let k = bisect(|k| k * k.tan() - 2.0, 0.1, 1.5);
    let root = k * k;
    let near_pi2 = lam.iter().map(|l| (l / pi2 - 1.0).abs()).fold(f64::INFINITY, f64::min);

    let rel = [(l1 / pi2 - 1.0).abs(), (lam[1] / root - 1.0).abs(), near_pi2];
    let secs = start.elapsed().as_secs_f64();
    Ok((
        rel.iter().all(|r| *r < 0.01) && secs < 60.0,
        format!(
            "Neumann {l1:.5} vs {pi2:.5}, limit {:.5} vs {root:.5}, pi^2 family off by {:.2e}, {secs:.1} s",
            lam[1], near_pi2
        ),
    ))
}

fn trend_line(e: &Experiment) -> String {
    e.trends
        .iter()
        .map(|t| {
            let v: Vec<String> = t.values.iter().map(|v| format!("{v:.4e}")).collect();
            format!(
                "{}{} [{}]",
                if t.passed { "" } else { "FAILED " },
                t.quantity,
                v.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn timed(
    run: impl FnOnce() -> sievelab::Result<Experiment>,
    limit_secs: f64,
) -> sievelab::Result<(Experiment, Outcome)> {
    let start = Instant::now();
    let e = run()?;
    let secs = start.elapsed().as_secs_f64();
    let outcome = Ok((
        e.passed() && secs < limit_secs,
        format!("{}, {secs:.1} s", trend_line(&e)),
    ));
    Ok((e, outcome))
}

fn quadrature_audit() -> Outcome {
    let dom = interface_domain();
    let k = unit_kernel(&dom);
    let desk = [0.25, 0.125, 0.0625];
    let mut ok = true;
    for &eps in &desk {
        let r = audit_assumptions(&plan(&dom, eps));
        ok &= r.all_passed();
    }
    // d = eps with a small constant keeps every hole inside its subcell
    let linear = DLaw { c: 0.01, p: 1.0 };
    let mut linear_ids = Vec::new();
    for &eps in &desk {
        let r = audit_assumptions(&build_sieve_plan(&dom, eps, linear, &k)?);
        linear_ids = r.failed_ids().iter().map(|s| s.to_string()).collect();
        ok &= linear_ids == ["d-law-5+"];
    }
    let plans: Vec<_> = [0.25, 0.125, 0.0625, 0.03125].iter().map(|&e| plan(&dom, e)).collect();
    let quad = GammaQuadrature::midpoint(dom.gamma_extent(), 512);
    let r = quadrature_convergence_check(&plans, |_, _| 1.0, &k, &quad)?;
    ok &= r.windows(2).all(|w| w[1] < w[0]);
    ok &= (r[1] - 0.234375).abs() < 1e-14;
    let rs: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
    Ok((
        ok,
        format!(
            "default plans clean, d = eps fails {linear_ids:?}, r = [{}]",
            rs.join(", ")
        ),
    ))
}

fn cross_fidelity(base: &Sweep) -> Outcome {
    let start = Instant::now();
    let mut full = base.clone();
    full.schedule = EpsilonSchedule::new(vec![0.25, 0.125], base.schedule.d_law, Model::Full, base.schedule.mesh)?;
    let (lf, lr) = cross_fidelity_lambda1(&full, 0.25)?;
    let rel = (lf - lr).abs() / lr;
    let passages = run_passage_energy_check(&full)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        rel <= 0.15 && passages.passed(),
        format!(
            "lambda_1 full {lf:.5} vs reduced {lr:.5} ({:.1}%), passage ratio {}, {secs:.1} s",
            100.0 * rel,
            passages
                .trends
                .iter()
                .map(|t| t.detail.clone())
                .collect::<Vec<_>>()
                .join("; ")
        ),
    ))
}

fn dense_solve(op: &OperatorPair, f: &[f64]) -> Vec<f64> {
    let m = op.mass.to_dense();
    let a = op.form_dense() + &m;
    let rhs = &m * nalgebra::DVector::from_column_slice(f);
    let lu = DMatrix::lu(a);
    lu.solve(&rhs).expect("non-singular").as_slice().to_vec()
}

fn solver_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cg = CgOptions::default();
    let mut worst_ratio = 0.0f64;
    for op in &all_operators(1.0 / 16.0) {
        for _ in 0..50 {
            let f = random_vector(&mut rng, op.dim());
            let (u, _) = solve_shifted(op, &f, 1.0, &cg)?;
            worst_ratio = worst_ratio.max(op.mass_norm(&u) / op.mass_norm(&f));
        }
    }
    let dom = interface_domain();
    let lm = uniform(&dom, 1.0 / 8.0);
    let small = [
        assemble_limit_operator(&lm, &unit_kernel(&dom))?,
        assemble_reduced_sieve(&lm, &plan(&dom, 0.25))?,
    ];
    let mut worst_dense = 0.0f64;
    let mut dofs = 0;
    for op in &small {
        dofs = dofs.max(op.dim());
        let f = random_vector(&mut rng, op.dim());
        let (u, _) = solve_shifted(op, &f, 1.0, &cg)?;
        let d = dense_solve(op, &f);
        let scale = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst_dense = worst_dense.max(u.iter().zip(&d).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale);
    }
    Ok((
        worst_ratio <= 1.0 && worst_dense <= 1e-8 && dofs <= 300,
        format!("max ||u||_M/||f||_M = {worst_ratio:.6}, dense gap {worst_dense:.1e} at {dofs} dofs"),
    ))
}

fn csv_bytes(experiments: &[Experiment], lam_cols: usize, hash: &str) -> sievelab::Result<Vec<u8>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("converge.csv");
    write_csv(&path, experiments, lam_cols, hash)?;
    Ok(std::fs::read(path)?)
}

fn report(id: usize, outcome: Outcome, failures: &mut usize) {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !passed {
        *failures += 1;
    }
    println!("criterion {id}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
}

fn main() {
    let mut failures = 0;
    let cfg = RunConfig::default();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let mut sweep = cfg.sweep().expect("default sweep");
    sweep.threads = threads;
    let mut robin = cfg.robin_sweep().expect("default robin sweep");
    robin.threads = threads;

    report(1, exactness(), &mut failures);
    report(2, oracle_eigenvalues(), &mut failures);

    let mut first = Vec::new();
    let runs: [(usize, Run); 3] = [
        (3, run_resolvent_convergence),
        (4, run_eigen_convergence),
        (5, run_heat_convergence),
    ];
    for (id, run) in runs {
        match timed(|| run(&sweep), 300.0) {
            Ok((e, o)) => {
                first.push(e);
                report(id, o, &mut failures);
            }
            Err(e) => report(id, Err(e), &mut failures),
        }
    }
    report(
        6,
        timed(|| run_robin_convergence(&robin), 300.0).and_then(|(_, o)| o),
        &mut failures,
    );
    report(7, quadrature_audit(), &mut failures);
    report(8, cross_fidelity(&sweep), &mut failures);
    report(9, solver_contract(), &mut failures);

    let determinism = (|| -> Outcome {
        if first.len() != 3 {
            return Ok((false, "first run incomplete".into()));
        }
        let second = vec![
            run_resolvent_convergence(&sweep)?,
            run_eigen_convergence(&sweep)?,
            run_heat_convergence(&sweep)?,
        ];
        let hash = cfg.hash()?;
        let (a, b) = (
            csv_bytes(&first, sweep.k - 1, &hash)?,
            csv_bytes(&second, sweep.k - 1, &hash)?,
        );
        Ok((a == b, format!("{} bytes each, {threads} threads", a.len())))
    })();
    report(10, determinism, &mut failures);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
