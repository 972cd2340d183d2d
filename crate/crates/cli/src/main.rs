use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sievelab::assembly::assemble_limit_operator;
use sievelab::config::{parse_config, parse_kernel_spec, RunConfig};
use sievelab::geometry::{audit_assumptions, build_sieve_plan, quadrature_convergence_check, SievePlan};
use sievelab::harness::{
    identify_j, lift_l, run_eigen_convergence, run_heat_convergence, run_passage_energy_check,
    run_resolvent_convergence, run_robin_convergence, Experiment, Forcing, Model, Sweep,
};
use sievelab::kernel::GammaQuadrature;
use sievelab::mesh::{mesh_limit_domain, mesh_sieve, GlueOptions, Grading};
use sievelab::report::{trend_summary, write_csv, write_plots};
use sievelab::solvers::solve_shifted;

#[derive(Parser, Debug)]
#[command(
    name = "sievelab",
    version,
    about = "Neumann sieve and non-local interface experiments"
)]
struct Cli {
    /// JSON config (every field optional; an empty file gives the defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated, strictly decreasing eps values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// constant:V | gaussian:A,W | cosine:B,A,F | table:PATH
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// reduced | full
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// one | const:V | sign-normal | sign-tangential | smooth
    #[arg(long, global = true)]
    forcing: Option<String>,
    /// Multiplies every hole radius.
    #[arg(long, global = true)]
    hole_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Assumption audit of the plan at every eps.
    Audit,
    /// Resolvent of the limit operator.
    SolveLimit,
    /// Resolvent of the sieve at every eps.
    SolveSieve,
    /// Eigenvalue sweep.
    Eigen,
    /// Heat-flow sweep.
    Heat,
    /// Resolvent, eigenvalue and heat sweeps (plus the passage check for the full model).
    Converge,
    /// The same sweeps in the one-sided Robin geometry.
    RobinConverge,
    /// Writes the limit mesh, its operators and (full model) the glued meshes.
    DumpMesh,
    /// Writes the sieve plan of every eps as JSON.
    DumpPlan,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::SolveLimit => "solve-limit",
            Command::SolveSieve => "solve-sieve",
            Command::Eigen => "eigen",
            Command::Heat => "heat",
            Command::Converge => "converge",
            Command::RobinConverge => "robin-converge",
            Command::DumpMesh => "dump-mesh",
            Command::DumpPlan => "dump-plan",
        }
    }
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Trend or audit-report failure.
    Failed,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(e) = &cli.eps_list {
        cfg.eps = e.clone();
    }
    if let Some(k) = &cli.kernel {
        cfg.kernel = parse_kernel_spec(k, cfg.domain()?.gamma_extent())?;
    }
    if let Some(m) = &cli.model {
        cfg.model = match m.as_str() {
            "reduced" => Model::Reduced,
            "full" => Model::Full,
            _ => bail!("unknown model {m:?} (reduced | full)"),
        };
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(f) = &cli.forcing {
        let f = Forcing::parse(f)?;
        cfg.forcing = Some(f);
        cfg.robin_forcing = Some(f);
    }
    if let Some(h) = cli.hole_scale {
        cfg.hole_scale = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plans(cfg: &RunConfig) -> Result<Vec<SievePlan>> {
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    cfg.eps
        .iter()
        .map(|&e| {
            let p = build_sieve_plan(&dom, e, cfg.d_law(), &kernel)?;
            Ok(if cfg.hole_scale != 1.0 {
                p.with_hole_scale(cfg.hole_scale)
            } else {
                p
            })
        })
        .collect()
}

fn finish(cfg: &RunConfig, name: &str, experiments: &[Experiment]) -> Result<Status> {
    let out = &cfg.output_dir;
    write_csv(
        &out.join(format!("{name}.csv")),
        experiments,
        cfg.eigen.k - 1,
        &cfg.hash()?,
    )?;
    write_plots(out, experiments)?;
    let summary = trend_summary(experiments);
    std::fs::write(out.join(format!("{name}-trends.txt")), &summary)?;
    print!("{summary}");
    Ok(if experiments.iter().all(Experiment::passed) {
        Status::Ok
    } else {
        Status::Failed
    })
}

fn audit(cfg: &RunConfig) -> Result<Status> {
    let plans = plans(cfg)?;
    let reports: Vec<_> = plans.iter().map(audit_assumptions).collect();
    let out = &cfg.output_dir;
    std::fs::write(out.join("audit.json"), serde_json::to_string_pretty(&reports)?)?;
    let mut w = csv_writer(&out.join("audit.csv"))?;
    writeln_csv(&mut w, &["eps", "id", "passed", "measured", "threshold", "config_hash"])?;
    let hash = cfg.hash()?;
    for r in &reports {
        for e in &r.entries {
            writeln_csv(
                &mut w,
                &[
                    &format!("{:.12e}", r.eps),
                    &e.id,
                    if e.passed { "true" } else { "false" },
                    &format!("{:.12e}", e.measured),
                    &format!("{:.12e}", e.threshold),
                    &hash,
                ],
            )?;
            println!(
                "{} eps={} {}: measured {:.6e}, threshold {:.6e}",
                if e.passed { "PASS" } else { "FAIL" },
                r.eps,
                e.id,
                e.measured,
                e.threshold
            );
        }
    }
    // Riemann sums of the constant test function against the exact integral
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let cells = if dom.n == 2 { 512 } else { 48 };
    let quad = GammaQuadrature::midpoint(dom.gamma_extent(), cells);
    let residuals = quadrature_convergence_check(&plans, |_, _| 1.0, &kernel, &quad)?;
    for (p, r) in plans.iter().zip(&residuals) {
        println!("quadrature residual eps={}: {:.6e}", p.eps, r);
    }
    Ok(if reports.iter().all(|r| r.all_passed()) {
        Status::Ok
    } else {
        Status::Failed
    })
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn writeln_csv<W: std::io::Write>(w: &mut W, fields: &[&str]) -> Result<()> {
    writeln!(w, "{}", fields.join(","))?;
    Ok(())
}

fn write_nodal(path: &Path, vertices: &[[f64; 2]], values: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln_csv(&mut w, &["x", "y", "u"])?;
    for (p, v) in vertices.iter().zip(values) {
        writeln!(w, "{:.12e},{:.12e},{:.12e}", p[0], p[1], v)?;
    }
    Ok(())
}

fn solve_limit(cfg: &RunConfig) -> Result<Status> {
    let sweep = cfg.sweep()?;
    let lm = mesh_limit_domain(&sweep.domain, cfg.mesh.h0, &Grading::none(), cfg.mesh.min_angle_deg)?;
    let op = assemble_limit_operator(&lm, &sweep.limit_kernel()?)?;
    let forcing = sweep.forcing;
    let f = lm.interpolate_sided(|x, y, s| forcing.value(x, y, s));
    let (u, stats) = solve_shifted(&op, &f, 1.0, &sweep.cg)?;
    write_nodal(&cfg.output_dir.join("solve-limit.csv"), &lm.mesh.vertices, &u)?;
    println!(
        "limit resolvent: {} dofs, ||u||_M = {:.10e}, {} CG iterations",
        op.dim(),
        op.mass_norm(&u),
        stats.iterations
    );
    Ok(Status::Ok)
}

fn solve_sieve(cfg: &RunConfig) -> Result<Status> {
    use sievelab::assembly::{assemble_reduced_sieve, assemble_sieve_full};
    let sweep = cfg.sweep()?;
    let forcing = sweep.forcing;
    for plan in plans(cfg)? {
        let (lm, op) = match cfg.model {
            Model::Reduced => {
                let lm = mesh_limit_domain(&sweep.domain, cfg.mesh.h0, &Grading::none(), cfg.mesh.min_angle_deg)?;
                let op = assemble_reduced_sieve(&lm, &plan)?;
                (lm, op)
            }
            Model::Full => {
                let lm = graded(cfg, &sweep, &plan)?;
                let g = mesh_sieve(&plan, &lm, &glue_opts(cfg))?;
                let op = assemble_sieve_full(&g)?;
                (lm, op)
            }
        };
        let f = lift_l(&lm.interpolate_sided(|x, y, s| forcing.value(x, y, s)), op.dim())?;
        let (u, stats) = solve_shifted(&op, &f, 1.0, &sweep.cg)?;
        let ju = identify_j(&u, lm.vertex_count())?;
        write_nodal(
            &cfg.output_dir.join(format!("solve-sieve-eps-{}.csv", plan.eps)),
            &lm.mesh.vertices,
            &ju,
        )?;
        println!(
            "sieve resolvent eps={}: {} dofs, ||u||_M = {:.10e}, {} CG iterations",
            plan.eps,
            op.dim(),
            op.mass_norm(&u),
            stats.iterations
        );
    }
    Ok(Status::Ok)
}

fn graded(cfg: &RunConfig, sweep: &Sweep, plan: &SievePlan) -> Result<sievelab::mesh::LimitMesh> {
    let m = &cfg.mesh;
    Ok(mesh_limit_domain(
        &sweep.domain,
        m.full_h0,
        &Grading::for_plan(plan, m.hole_edges, m.rings),
        m.min_angle_deg,
    )?)
}

fn glue_opts(cfg: &RunConfig) -> GlueOptions {
    GlueOptions {
        min_angle_deg: cfg.mesh.min_angle_deg,
        ..GlueOptions::default()
    }
}

fn dump_mesh(cfg: &RunConfig) -> Result<Status> {
    let sweep = cfg.sweep()?;
    let out = &cfg.output_dir;
    let lm = mesh_limit_domain(&sweep.domain, cfg.mesh.h0, &Grading::none(), cfg.mesh.min_angle_deg)?;
    lm.mesh.write_text(csv_writer(&out.join("limit-mesh.txt"))?)?;
    assemble_limit_operator(&lm, &sweep.limit_kernel()?)?.dump(&out.join("limit-operator"))?;
    println!(
        "limit mesh: {} vertices, {} triangles",
        lm.vertex_count(),
        lm.mesh.triangles.len()
    );
    if cfg.model == Model::Full {
        for plan in plans(cfg)? {
            let g = mesh_sieve(&plan, &graded(cfg, &sweep, &plan)?, &glue_opts(cfg))?;
            g.write_text(csv_writer(&out.join(format!("glued-mesh-eps-{}.txt", plan.eps)))?)?;
            println!(
                "glued mesh eps={}: {} dofs, {} passages",
                plan.eps,
                g.dof_count,
                g.passages.len()
            );
        }
    }
    Ok(Status::Ok)
}

fn dump_plan(cfg: &RunConfig) -> Result<Status> {
    for plan in plans(cfg)? {
        let path = cfg.output_dir.join(format!("plan-eps-{}.json", plan.eps));
        plan.save(&path)?;
        println!(
            "plan eps={}: {} cells, {} holes, {} passages -> {}",
            plan.eps,
            plan.cells.len(),
            plan.holes.len(),
            plan.passages.len(),
            path.display()
        );
    }
    Ok(Status::Ok)
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<Status> {
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let name = command.name();
    match command {
        Command::Audit => audit(cfg),
        Command::SolveLimit => solve_limit(cfg),
        Command::SolveSieve => solve_sieve(cfg),
        Command::DumpMesh => dump_mesh(cfg),
        Command::DumpPlan => dump_plan(cfg),
        Command::Eigen => finish(cfg, name, &[run_eigen_convergence(&cfg.sweep()?)?]),
        Command::Heat => finish(cfg, name, &[run_heat_convergence(&cfg.sweep()?)?]),
        Command::Converge => {
            let sweep = cfg.sweep()?;
            let mut ex = vec![
                run_resolvent_convergence(&sweep)?,
                run_eigen_convergence(&sweep)?,
                run_heat_convergence(&sweep)?,
            ];
            if cfg.model == Model::Full {
                ex.push(run_passage_energy_check(&sweep)?);
            }
            finish(cfg, name, &ex)
        }
        Command::RobinConverge => finish(cfg, name, &[run_robin_convergence(&cfg.robin_sweep()?)?]),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => {
            eprintln!("{}: one or more checks failed", cli.command.name());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
