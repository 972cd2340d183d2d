use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{audit_gate, check_trend, identify_j, lift_l, ConvergenceRecord, Experiment, Model, Sweep, TrendOutcome};
use crate::assembly::{
    assemble_limit_operator, assemble_reduced_sieve, assemble_sieve_full, passage_l2_norms_sq, OperatorPair,
};
use crate::error::{Result, SieveError};
use crate::geometry::{build_sieve_plan, SievePlan, Topology};
use crate::mesh::{mesh_limit_domain, mesh_sieve, GlueOptions, GluedMesh, Grading, LimitMesh};
use crate::semigroup::{heat_evolve, Trajectory};
use crate::solvers::{lobpcg, solve_shifted};

#[derive(Clone, Copy, Debug, Default)]
struct Measures {
    resolvent: bool,
    eigen: bool,
    heat: bool,
    passages: bool,
}

struct LimitSide {
    lmesh: LimitMesh,
    op: OperatorPair,
    f: Vec<f64>,
    f_norm: f64,
    u: Option<Vec<f64>>,
    eig: Option<Vec<f64>>,
    heat: Option<Trajectory>,
}

fn limit_side(sweep: &Sweep, lmesh: LimitMesh, m: Measures) -> Result<LimitSide> {
    let op = assemble_limit_operator(&lmesh, &sweep.limit_kernel()?)?;
    let forcing = sweep.forcing;
    let f = lmesh.interpolate_sided(|x, y, s| forcing.value(x, y, s));
    let f_norm = op.mass_norm(&f);
    let u = if m.resolvent {
        Some(solve_shifted(&op, &f, 1.0, &sweep.cg)?.0)
    } else {
        None
    };
    let eig = if m.eigen {
        Some(lobpcg(&op, sweep.k, &sweep.eigen)?.values)
    } else {
        None
    };
    let heat = if m.heat {
        Some(heat_evolve(&op, &f, &sweep.heat, &sweep.cg)?)
    } else {
        None
    };
    Ok(LimitSide {
        lmesh,
        op,
        f,
        f_norm,
        u,
        eig,
        heat,
    })
}

fn check_supported(sweep: &Sweep) -> Result<()> {
    if sweep.domain.n != 2 {
        return Err(SieveError::Config(format!(
            "sweeps mesh the domain and need n = 2 (got n = {}); use the audit for n = 3",
            sweep.domain.n
        )));
    }
    if sweep.k < 2 || sweep.k > 9 {
        return Err(SieveError::Config(format!("k = {} outside 2..=9", sweep.k)));
    }
    Ok(())
}

fn plans_checked(sweep: &Sweep) -> Result<Vec<SievePlan>> {
    check_supported(sweep)?;
    let plans = sweep.plans()?;
    if sweep.audit_gate {
        audit_gate(&plans)?;
    }
    Ok(plans)
}

fn graded_mesh(sweep: &Sweep, plan: &SievePlan) -> Result<LimitMesh> {
    let mp = &sweep.schedule.mesh;
    mesh_limit_domain(
        &sweep.domain,
        mp.full_h0,
        &Grading::for_plan(plan, mp.hole_edges, mp.rings),
        mp.min_angle_deg,
    )
}

fn glue(sweep: &Sweep, plan: &SievePlan, lmesh: &LimitMesh) -> Result<GluedMesh> {
    let opts = GlueOptions {
        min_angle_deg: sweep.schedule.mesh.min_angle_deg,
        ..GlueOptions::default()
    };
    mesh_sieve(plan, lmesh, &opts)
}

/// The sieve side of one `eps` case.
struct Case<'a> {
    plan: &'a SievePlan,
    sieve: &'a OperatorPair,
    glued: Option<&'a GluedMesh>,
    start: Instant,
}

/// One `eps` case against a prepared limit side.
fn measure_case(sweep: &Sweep, name: &str, side: &LimitSide, case: Case<'_>, m: Measures) -> Result<ConvergenceRecord> {
    let Case {
        plan,
        sieve,
        glued,
        start,
    } = case;
    let nl = side.lmesh.vertex_count();
    let mut rec = ConvergenceRecord::blank(name, plan.eps, sweep.schedule.model);
    rec.dofs_limit = nl;
    rec.dofs_sieve = sieve.dim();
    let f_eps = lift_l(&side.f, sieve.dim())?;

    if m.resolvent || m.passages {
        let (u_eps, stats) = solve_shifted(sieve, &f_eps, 1.0, &sweep.cg)?;
        rec.cg_iters += stats.iterations;
        if let Some(u) = &side.u {
            let e: Vec<f64> = identify_j(&u_eps, nl)?.iter().zip(u).map(|(a, b)| a - b).collect();
            rec.err_l2 = Some(side.op.mass_norm(&e));
            let h1 = side.op.stiffness.bilinear(&e, &e) + side.op.mass.bilinear(&e, &e);
            rec.err_h1b = Some(h1.max(0.0).sqrt());
        }
        if m.passages {
            if let Some(g) = glued {
                let tube: f64 = passage_l2_norms_sq(g, &u_eps).iter().sum();
                let h1 = sieve.stiffness.bilinear(&u_eps, &u_eps) + sieve.mass.bilinear(&u_eps, &u_eps);
                rec.passage_ratio = Some(if h1 > 0.0 { tube / (plan.h_eps() * h1) } else { 0.0 });
            }
        }
    }
    if let Some(lim) = &side.eig {
        let res = lobpcg(sieve, sweep.k, &sweep.eigen)?;
        rec.lam_err = (1..sweep.k).map(|i| (res.values[i] - lim[i]).abs()).collect();
    }
    if let Some(lim) = &side.heat {
        let tr = heat_evolve(sieve, &f_eps, &sweep.heat, &sweep.cg)?;
        rec.cg_iters += tr.stats.iterations;
        let mut sup = 0.0f64;
        for (v_eps, v) in tr.states.iter().zip(&lim.states) {
            let e: Vec<f64> = identify_j(v_eps, nl)?.iter().zip(v).map(|(a, b)| a - b).collect();
            sup = sup.max(side.op.mass_norm(&e));
        }
        rec.heat_sup_err = Some(sup);
    }
    if sweep.timings {
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    Ok(rec)
}

/// Runs the requested measurements for every `eps` of the schedule.
/// Returns the records (ordered by decreasing `eps`), the limit eigenvalues
/// of the first case and the limit forcing norm.
fn sweep_records(sweep: &Sweep, name: &str, m: Measures) -> Result<(Vec<ConvergenceRecord>, Vec<f64>, f64)> {
    let plans = plans_checked(sweep)?;
    let pool = sweep.pool()?;
    pool.install(|| match sweep.schedule.model {
        Model::Reduced => {
            let mp = &sweep.schedule.mesh;
            let lmesh = mesh_limit_domain(&sweep.domain, mp.h0, &Grading::none(), mp.min_angle_deg)?;
            let side = Arc::new(limit_side(sweep, lmesh, m)?);
            let records = plans
                .par_iter()
                .map(|plan| {
                    let start = Instant::now();
                    let sieve = assemble_reduced_sieve(&side.lmesh, plan)?;
                    let case = Case {
                        plan,
                        sieve: &sieve,
                        glued: None,
                        start,
                    };
                    measure_case(sweep, name, &side, case, m)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((records, side.eig.clone().unwrap_or_default(), side.f_norm))
        }
        Model::Full => {
            let out = plans
                .par_iter()
                .map(|plan| {
                    let start = Instant::now();
                    let lmesh = graded_mesh(sweep, plan)?;
                    let glued = glue(sweep, plan, &lmesh)?;
                    let sieve = assemble_sieve_full(&glued)?;
                    let side = limit_side(sweep, lmesh, m)?;
                    let case = Case {
                        plan,
                        sieve: &sieve,
                        glued: Some(&glued),
                        start,
                    };
                    let rec = measure_case(sweep, name, &side, case, m)?;
                    Ok((rec, side.eig.clone().unwrap_or_default(), side.f_norm))
                })
                .collect::<Result<Vec<_>>>()?;
            let eig = out.first().map(|o| o.1.clone()).unwrap_or_default();
            let f_norm = out.first().map_or(0.0, |o| o.2);
            Ok((out.into_iter().map(|o| o.0).collect(), eig, f_norm))
        }
    })
}

fn trends(records: &[ConvergenceRecord], limit_eig: &[f64], f_norm: f64, m: Measures) -> Vec<TrendOutcome> {
    let floor = 1e-9 * f_norm;
    let mut out = Vec::new();
    if m.resolvent {
        let v: Vec<f64> = records.iter().map(|r| r.err_l2.unwrap_or(f64::NAN)).collect();
        out.push(check_trend("err_l2", &v, floor));
    }
    if m.eigen {
        for i in 1..limit_eig.len() {
            let v: Vec<f64> = records
                .iter()
                .map(|r| r.lam_err.get(i - 1).copied().unwrap_or(f64::NAN))
                .collect();
            out.push(check_trend(&format!("lam_err_{i}"), &v, 1e-6 * limit_eig[i].max(1.0)));
        }
    }
    if m.heat {
        let v: Vec<f64> = records.iter().map(|r| r.heat_sup_err.unwrap_or(f64::NAN)).collect();
        out.push(check_trend("heat_sup_err", &v, floor));
    }
    out
}

fn run(sweep: &Sweep, name: &str, m: Measures) -> Result<Experiment> {
    let (records, limit_eigenvalues, f_norm) = sweep_records(sweep, name, m)?;
    let trends = trends(&records, &limit_eigenvalues, f_norm, m);
    Ok(Experiment {
        name: name.to_string(),
        records,
        trends,
        limit_eigenvalues,
    })
}

fn prefixed(sweep: &Sweep, base: &str) -> String {
    match sweep.domain.topology {
        Topology::Interface => base.to_string(),
        Topology::Boundary => format!("robin-{base}"),
    }
}

/// `||J (H_eps + 1)^{-1} L f - (H + 1)^{-1} f||` per `eps`.
pub fn run_resolvent_convergence(sweep: &Sweep) -> Result<Experiment> {
    let m = Measures {
        resolvent: true,
        ..Measures::default()
    };
    run(sweep, &prefixed(sweep, "resolvent"), m)
}

/// `|lambda_{i,eps} - lambda_i|` for `i = 1..k-1`, sorted-index-wise.
pub fn run_eigen_convergence(sweep: &Sweep) -> Result<Experiment> {
    let m = Measures {
        eigen: true,
        ..Measures::default()
    };
    run(sweep, &prefixed(sweep, "eigen"), m)
}

/// Largest sampled `||J v_eps(t) - v(t)||` over the heat trajectories.
pub fn run_heat_convergence(sweep: &Sweep) -> Result<Experiment> {
    let m = Measures {
        heat: true,
        ..Measures::default()
    };
    run(sweep, &prefixed(sweep, "heat"), m)
}

/// Resolvent, spectral and heat errors for the boundary topology.
pub fn run_robin_convergence(sweep: &Sweep) -> Result<Experiment> {
    if sweep.domain.topology != Topology::Boundary {
        return Err(SieveError::Config("Robin sweep needs the boundary topology".into()));
    }
    let m = Measures {
        resolvent: true,
        eigen: true,
        heat: true,
        passages: false,
    };
    run(sweep, "robin", m)
}

/// `R(eps) = sum_T ||u_eps||^2_{L2(T)} / (h_eps ||u_eps||^2_{H1})` for the
/// resolvent solutions of the full model; passes when `max R / min R <= 10`.
/// The reduced model has no passage volume, so the check is skipped.
pub fn run_passage_energy_check(sweep: &Sweep) -> Result<Experiment> {
    let name = "passage-energy";
    if sweep.schedule.model == Model::Reduced {
        return Ok(Experiment {
            name: name.into(),
            records: Vec::new(),
            trends: vec![TrendOutcome {
                quantity: "passage_ratio".into(),
                values: Vec::new(),
                floor: 0.0,
                passed: true,
                detail: "skipped: the reduced model has no meshed passages".into(),
            }],
            limit_eigenvalues: Vec::new(),
        });
    }
    let m = Measures {
        passages: true,
        ..Measures::default()
    };
    let (records, _, _) = sweep_records(sweep, name, m)?;
    let ratios: Vec<f64> = records.iter().map(|r| r.passage_ratio.unwrap_or(f64::NAN)).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let finite = ratios.iter().all(|r| r.is_finite() && *r >= 0.0);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    let trend = TrendOutcome {
        quantity: "passage_ratio".into(),
        values: ratios,
        floor: 0.0,
        passed: finite && spread <= 10.0,
        detail: format!("max/min = {spread:.4}"),
    };
    Ok(Experiment {
        name: name.into(),
        records,
        trends: vec![trend],
        limit_eigenvalues: Vec::new(),
    })
}

/// `(lambda_1 full, lambda_1 reduced)` at one `eps`, both on the graded mesh
/// of that plan.
pub fn cross_fidelity_lambda1(sweep: &Sweep, eps: f64) -> Result<(f64, f64)> {
    check_supported(sweep)?;
    let mut plan = build_sieve_plan(&sweep.domain, eps, sweep.schedule.d_law, &sweep.kernel)?;
    if sweep.schedule.hole_scale != 1.0 {
        plan = plan.with_hole_scale(sweep.schedule.hole_scale);
    }
    let lmesh = graded_mesh(sweep, &plan)?;
    let glued = glue(sweep, &plan, &lmesh)?;
    let full = assemble_sieve_full(&glued)?;
    let reduced = assemble_reduced_sieve(&lmesh, &plan)?;
    let pool = sweep.pool()?;
    let (a, b) = pool.install(|| rayon::join(|| lobpcg(&full, 2, &sweep.eigen), || lobpcg(&reduced, 2, &sweep.eigen)));
    Ok((a?.values[1], b?.values[1]))
}
