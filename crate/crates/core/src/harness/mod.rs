//! Epsilon sweeps comparing sieve operators with their limits.
//!
//! Every run builds one sieve plan per `eps`, pairs it with a limit operator
//! on the same bulk mesh, and records identified errors. Trends are judged
//! by [`check_trend`]: each step must decrease (or sit below a noise floor)
//! and the last value must be at most half of the first.

mod runs;

pub use runs::{
    cross_fidelity_lambda1, run_eigen_convergence, run_heat_convergence, run_passage_energy_check,
    run_resolvent_convergence, run_robin_convergence,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};
use crate::geometry::{
    audit_assumptions, build_sieve_plan, AuditReport, DLaw, LimitDomain, SievePlan, Topology, AUDIT_IDS,
};
use crate::kernel::InterfaceKernel;
use crate::semigroup::HeatOptions;
use crate::solvers::{CgOptions, EigenOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Passages collapsed to rank-one couplings on the limit mesh.
    Reduced,
    /// Passages meshed and glued to a graded bulk mesh.
    Full,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Reduced => "reduced",
            Model::Full => "full",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshParams {
    /// Root spacing of the shared reduced-model mesh.
    pub h0: f64,
    /// Root spacing of the graded full-model meshes.
    pub full_h0: f64,
    /// Mesh edges across each hole in the full model.
    pub hole_edges: usize,
    pub rings: usize,
    pub min_angle_deg: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            h0: 1.0 / 64.0,
            full_h0: 1.0 / 32.0,
            hole_edges: 4,
            rings: 3,
            min_angle_deg: 15.0,
        }
    }
}

/// Initial data / right-hand sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Forcing {
    Constant {
        value: f64,
    },
    /// `+1` above the interface (plus traces included), `-1` below.
    SignNormal,
    /// `sign(x^1)`.
    SignTangential,
    /// `cos(pi x^1) + x^2`.
    Smooth,
}

impl Forcing {
    /// Parses `one`, `const:V`, `sign-normal`, `sign-tangential`, `smooth`.
    pub fn parse(s: &str) -> Result<Forcing> {
        match s {
            "one" => Ok(Forcing::Constant { value: 1.0 }),
            "sign-normal" => Ok(Forcing::SignNormal),
            "sign-tangential" => Ok(Forcing::SignTangential),
            "smooth" => Ok(Forcing::Smooth),
            _ => match s.strip_prefix("const:") {
                Some(v) => v
                    .parse()
                    .map(|value| Forcing::Constant { value })
                    .map_err(|_| SieveError::Config(format!("bad constant forcing {s:?}"))),
                None => Err(SieveError::Config(format!("unknown forcing {s:?}"))),
            },
        }
    }

    pub fn value(&self, x: f64, y: f64, side: i8) -> f64 {
        match *self {
            Forcing::Constant { value } => value,
            Forcing::SignNormal => {
                if side > 0 || (side == 0 && y > 0.0) {
                    1.0
                } else {
                    -1.0
                }
            }
            Forcing::SignTangential => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Forcing::Smooth => (std::f64::consts::PI * x).cos() + y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    eps: Vec<f64>,
    pub d_law: DLaw,
    pub model: Model,
    pub mesh: MeshParams,
    /// Multiplies every hole radius (1 = as constructed).
    pub hole_scale: f64,
}

impl EpsilonSchedule {
    pub fn new(eps: Vec<f64>, d_law: DLaw, model: Model, mesh: MeshParams) -> Result<Self> {
        if eps.is_empty() {
            return Err(SieveError::Config("empty epsilon schedule".into()));
        }
        if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(SieveError::Config(format!(
                "epsilon values must lie in (0, 1): {eps:?}"
            )));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(SieveError::Config(format!(
                "epsilon schedule must decrease strictly: {eps:?}"
            )));
        }
        Ok(Self {
            eps,
            d_law,
            model,
            mesh,
            hole_scale: 1.0,
        })
    }

    /// `1/4, 1/8, 1/16` with the cubic d-law and the reduced model.
    pub fn default_desk() -> Self {
        Self::new(
            vec![0.25, 0.125, 0.0625],
            DLaw::cubic(),
            Model::Reduced,
            MeshParams::default(),
        )
        .expect("default schedule is valid")
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }
}

/// Everything a sweep needs.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub domain: LimitDomain,
    /// Kernel of the sieve construction.
    pub kernel: InterfaceKernel,
    pub schedule: EpsilonSchedule,
    pub forcing: Forcing,
    /// Eigenvalues per operator, `lambda_0 = 0` included.
    pub k: usize,
    pub cg: CgOptions,
    pub eigen: EigenOptions,
    pub heat: HeatOptions,
    /// Worker threads (0 = all cores).
    pub threads: usize,
    pub audit_gate: bool,
    pub timings: bool,
}

impl Sweep {
    pub fn new(domain: LimitDomain, kernel: InterfaceKernel, schedule: EpsilonSchedule) -> Self {
        let forcing = match domain.topology {
            Topology::Interface => Forcing::SignNormal,
            Topology::Boundary => Forcing::SignTangential,
        };
        Self {
            domain,
            kernel,
            schedule,
            forcing,
            k: 6,
            cg: CgOptions::default(),
            eigen: EigenOptions::default(),
            heat: HeatOptions::default(),
            threads: 0,
            audit_gate: true,
            timings: false,
        }
    }

    /// Kernel of the limit form. The boundary sieve carries one passage per
    /// unordered pair of subcells while the Robin double integral counts each
    /// pair twice, hence the factor one half.
    pub fn limit_kernel(&self) -> Result<InterfaceKernel> {
        match self.domain.topology {
            Topology::Interface => Ok(self.kernel.clone()),
            Topology::Boundary => self.kernel.scaled(0.5),
        }
    }

    pub fn plans(&self) -> Result<Vec<SievePlan>> {
        self.schedule
            .eps()
            .iter()
            .map(|&e| {
                let p = build_sieve_plan(&self.domain, e, self.schedule.d_law, &self.kernel)?;
                Ok(if self.schedule.hole_scale != 1.0 {
                    p.with_hole_scale(self.schedule.hole_scale)
                } else {
                    p
                })
            })
            .collect()
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| SieveError::Config(format!("thread pool: {e}")))
    }
}

/// Audits every plan; the first failed check becomes a
/// [`SieveError::PlanViolation`].
pub fn audit_gate(plans: &[SievePlan]) -> Result<Vec<AuditReport>> {
    let reports: Vec<AuditReport> = plans.iter().map(audit_assumptions).collect();
    for r in &reports {
        if let Some(id) = r.failed_ids().first() {
            let assumption = AUDIT_IDS.iter().find(|a| *a == id).copied().unwrap_or("audit");
            let e = r.entry(id).expect("failed id has an entry");
            return Err(SieveError::PlanViolation {
                assumption,
                detail: format!(
                    "eps = {}: measured {:e} against threshold {:e} ({})",
                    r.eps, e.measured, e.threshold, e.detail
                ),
            });
        }
    }
    Ok(reports)
}

/// `J`: restriction of a sieve vector to the bulk (limit) DOFs.
pub fn identify_j(u: &[f64], limit_dofs: usize) -> Result<Vec<f64>> {
    if u.len() < limit_dofs {
        return Err(SieveError::Mesh(format!(
            "sieve vector of length {} is shorter than the {limit_dofs} limit DOFs",
            u.len()
        )));
    }
    Ok(u[..limit_dofs].to_vec())
}

/// `L`: zero extension of a limit vector to the passage DOFs.
pub fn lift_l(v: &[f64], dof_count: usize) -> Result<Vec<f64>> {
    if v.len() > dof_count {
        return Err(SieveError::Mesh(format!(
            "limit vector of length {} exceeds the {dof_count} sieve DOFs",
            v.len()
        )));
    }
    let mut out = v.to_vec();
    out.resize(dof_count, 0.0);
    Ok(out)
}

/// One row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub experiment: String,
    pub eps: f64,
    pub model: Model,
    pub dofs_limit: usize,
    pub dofs_sieve: usize,
    pub err_l2: Option<f64>,
    pub err_h1b: Option<f64>,
    /// `|lambda_{i,eps} - lambda_i|` for `i = 1..k-1`.
    pub lam_err: Vec<f64>,
    pub heat_sup_err: Option<f64>,
    pub passage_ratio: Option<f64>,
    pub cg_iters: usize,
    pub wall_ms: f64,
}

impl ConvergenceRecord {
    pub(crate) fn blank(experiment: &str, eps: f64, model: Model) -> Self {
        Self {
            experiment: experiment.to_string(),
            eps,
            model,
            dofs_limit: 0,
            dofs_sieve: 0,
            err_l2: None,
            err_h1b: None,
            lam_err: Vec::new(),
            heat_sup_err: None,
            passage_ratio: None,
            cg_iters: 0,
            wall_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendOutcome {
    pub quantity: String,
    pub values: Vec<f64>,
    pub floor: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub records: Vec<ConvergenceRecord>,
    pub trends: Vec<TrendOutcome>,
    /// Limit eigenvalues when computed (`lambda_0` first).
    pub limit_eigenvalues: Vec<f64>,
}

impl Experiment {
    pub fn passed(&self) -> bool {
        self.trends.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> Vec<&TrendOutcome> {
        self.trends.iter().filter(|t| !t.passed).collect()
    }
}

/// Trend rule on values ordered by decreasing `eps`: every step decreases
/// strictly or lands at or below `floor`, and the last value is at most half
/// of the first (or at or below `floor`). One value passes trivially.
pub fn check_trend(quantity: &str, values: &[f64], floor: f64) -> TrendOutcome {
    let mut out = TrendOutcome {
        quantity: quantity.to_string(),
        values: values.to_vec(),
        floor,
        passed: true,
        detail: String::new(),
    };
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        out.passed = false;
        out.detail = "non-finite or negative value".into();
        return out;
    }
    if values.len() < 2 {
        out.detail = "single value, trend skipped".into();
        return out;
    }
    for (i, w) in values.windows(2).enumerate() {
        if !(w[1] < w[0] || w[1] <= floor) {
            out.passed = false;
            out.detail = format!("step {} -> {} does not decrease ({:e} -> {:e})", i, i + 1, w[0], w[1]);
            return out;
        }
    }
    let (first, last) = (values[0], values[values.len() - 1]);
    if !(last <= 0.5 * first || last <= floor) {
        out.passed = false;
        out.detail = format!("last {last:e} exceeds half of first {first:e}");
        return out;
    }
    out.detail = format!("ratio last/first = {:.4}", if first > 0.0 { last / first } else { 0.0 });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_rule() {
        assert!(check_trend("e", &[1.0, 0.6, 0.4], 0.0).passed);
        assert!(!check_trend("e", &[1.0, 0.9, 0.8], 0.0).passed);
        assert!(!check_trend("e", &[1.0, 1.0, 0.1], 0.0).passed);
        assert!(check_trend("e", &[0.0, 0.0, 0.0], 1e-9).passed);
        assert!(check_trend("e", &[3.0], 0.0).passed);
        assert!(!check_trend("e", &[1.0, f64::NAN], 0.0).passed);
    }

    #[test]
    fn j_after_l_is_identity() {
        let v = vec![1.0, 2.0, 3.0];
        let l = lift_l(&v, 5).unwrap();
        assert_eq!(l, vec![1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(identify_j(&l, 3).unwrap(), v);
        assert!(identify_j(&v, 4).is_err());
        assert!(lift_l(&l, 3).is_err());
    }

    #[test]
    fn schedule_must_decrease() {
        let m = MeshParams::default();
        assert!(EpsilonSchedule::new(vec![0.25, 0.25], DLaw::cubic(), Model::Reduced, m).is_err());
        assert!(EpsilonSchedule::new(vec![], DLaw::cubic(), Model::Reduced, m).is_err());
        assert!(EpsilonSchedule::new(vec![0.125, 0.25], DLaw::cubic(), Model::Reduced, m).is_err());
    }

    #[test]
    fn forcing_parse() {
        assert_eq!(Forcing::parse("one").unwrap(), Forcing::Constant { value: 1.0 });
        assert_eq!(Forcing::parse("const:2.5").unwrap(), Forcing::Constant { value: 2.5 });
        assert!(Forcing::parse("nope").is_err());
        assert_eq!(Forcing::SignNormal.value(0.1, 0.0, -1), -1.0);
        assert_eq!(Forcing::SignNormal.value(0.1, 0.0, 1), 1.0);
    }
}
