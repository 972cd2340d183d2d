use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::plan::admissible_cells;
use super::{unit_ball_volume, LimitDomain, Side, SievePlan, Topology};
use crate::error::{Result, SieveError};
use crate::kernel::{double_integral, GammaQuadrature, InterfaceKernel};

/// Audit ids in report order.
pub const AUDIT_IDS: [&str; 13] = [
    "shape1", "shape2", "a1", "a2", "a3", "a4", "a5", "main1", "main2", "drho", "2drho", "d-law-5+", "d-law-4+",
];

/// Limit-type checks follow the plan's law along `eps / 2^k`, `k < REF_LEN`.
const REF_LEN: usize = 4;
/// Largest `#Z_eps^2` for which the Riemann sum of `main2` is evaluated.
const MAX_LINKS: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub eps: f64,
    pub entries: Vec<AuditEntry>,
    /// `(shape description, lower bound on Lambda_N)` per distinct hole shape.
    pub lambda_n_bounds: Vec<(String, f64)>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failed_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !e.passed)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn entry(&self, id: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Shape descriptors accepted by [`lambda_n_lower_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum HoleShape {
    /// Unit ball in `R^dim`.
    UnitBall {
        dim: usize,
    },
    Convex {
        diameter: f64,
    },
    /// Domain in `R^dim`, star-shaped with respect to a point `p`, with
    /// `r_min`/`r_max` the extreme boundary distances to `p` and
    /// `h = min <x - p, nu(x)>` over the boundary.
    StarShaped {
        dim: usize,
        r_min: f64,
        r_max: f64,
        h: f64,
    },
}

/// Lower bound for the first non-zero Neumann eigenvalue: Payne-Weinberger
/// for convex shapes, Bramble-Payne for star-shaped ones.
pub fn lambda_n_lower_bound(shape: HoleShape) -> Result<f64> {
    use std::f64::consts::PI;
    match shape {
        HoleShape::UnitBall { .. } => Ok(PI * PI / 4.0),
        HoleShape::Convex { diameter } if diameter > 0.0 => Ok(PI * PI / (diameter * diameter)),
        HoleShape::Convex { diameter } => Err(SieveError::Geometry(format!("diameter {diameter} must be positive"))),
        HoleShape::StarShaped { dim, r_min, r_max, h } => {
            if !(h > 0.0) {
                return Err(SieveError::Geometry(format!(
                    "star-shaped descriptor needs h > 0, got {h}"
                )));
            }
            if !(r_min > 0.0 && r_max >= r_min) || dim == 0 {
                return Err(SieveError::Geometry(format!(
                    "star-shaped descriptor needs 0 < r_min <= r_max, got {r_min}, {r_max}"
                )));
            }
            let n = dim as f64;
            let rmn = r_min.powi(dim as i32 - 1);
            Ok(n * rmn * h / (2.0 * r_max * r_max * (r_max.powi(dim as i32) + 2.0 / n * rmn * h)))
        }
    }
}

/// `sum_{(s,t)} K(x_st, x_ts) v(x_st, x_ts) eps^{2(n-1)}` over the ordered
/// cell pairs of the lattice at `eps` (off-diagonal pairs only in the
/// boundary topology). This is the link sum of an unscaled plan without
/// building one.
pub fn link_sum<F>(dom: &LimitDomain, eps: f64, kernel: &InterfaceKernel, v: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let cells = admissible_cells(dom, eps);
    let m = dom.n - 1;
    let nc = cells.len();
    if nc * nc > MAX_LINKS {
        return Err(SieveError::Geometry(format!(
            "{} links exceed the cap {MAX_LINKS}",
            nc * nc
        )));
    }
    let weight = eps.powi(2 * m as i32);
    let centers: Vec<Vec<Vec<f64>>> = (0..nc)
        .map(|s| {
            (0..nc)
                .map(|t| {
                    (0..m)
                        .map(|k| eps * eps / dom.edge * cells[t].index[k] as f64 + eps * cells[s].index[k] as f64)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for s in 0..nc {
        for t in 0..nc {
            if s == t && dom.topology == Topology::Boundary {
                continue;
            }
            let (x, y) = (&centers[s][t], &centers[t][s]);
            total += kernel.evaluate(x, y)? * v(x, y) * weight;
        }
    }
    Ok(total)
}

/// `|sum_{(i,j) in L_eps} K_ij v(x_i, x_j) - \int\int K v|` for every plan.
/// In the boundary topology both orientations of every passage belong to
/// `L_eps`.
pub fn quadrature_convergence_check<F>(
    plans: &[SievePlan],
    v: F,
    kernel: &InterfaceKernel,
    quad: &GammaQuadrature,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let exact = double_integral(kernel, &v, quad)?;
    Ok(plans
        .iter()
        .map(|plan| {
            let sum: f64 = plan
                .passages
                .iter()
                .map(|p| {
                    let (x, y) = (&plan.holes[p.a].center, &plan.holes[p.b].center);
                    match plan.topology() {
                        Topology::Interface => p.coupling * v(x, y),
                        Topology::Boundary => p.coupling * (v(x, y) + v(y, x)),
                    }
                })
                .sum();
            (sum - exact).abs()
        })
        .collect())
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] < w[0])
}

fn fmt_seq(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn entry(id: &str, passed: bool, measured: f64, threshold: f64, detail: String) -> AuditEntry {
    AuditEntry {
        id: id.to_string(),
        passed,
        measured,
        threshold,
        detail,
    }
}

/// Numerical check of every geometric and scaling assumption on `plan`.
/// Failures are recorded in the report, never returned as errors.
pub fn audit_assumptions(plan: &SievePlan) -> AuditReport {
    let dom = &plan.domain;
    let m = dom.n - 1;
    let mi = m as i32;
    let eps = plan.eps;
    let rho = plan.rho;
    let kernel = &plan.kernel;
    let scale = plan.hole_scale;
    let omega = unit_ball_volume(m);

    let refs: Vec<f64> = (0..REF_LEN).map(|k| eps / f64::powi(2.0, k as i32)).collect();
    let rho_of = |e: f64| e * e / dom.edge / 2.0;
    let d_of = |e: f64| plan.d_law.d(e);
    let r_min_of = |e: f64| scale * kernel.k_min().powf(1.0 / m as f64) * d_of(e);
    let r_max_of = |e: f64| scale * kernel.k_max().powf(1.0 / m as f64) * d_of(e);
    let q = |d: f64| if dom.n == 2 { -d.ln() } else { d.powi(2 - dom.n as i32) };

    let r_max = plan.holes.iter().map(|h| h.radius).fold(0.0, f64::max);
    let h_eps = plan.h_eps();
    let mut entries = Vec::with_capacity(AUDIT_IDS.len());

    entries.push(entry(
        "shape1",
        true,
        1.0,
        0.0,
        "holes are balls; the upscaled hole is the unit ball with inradius 1".into(),
    ));
    let pw = lambda_n_lower_bound(HoleShape::UnitBall { dim: m }).unwrap_or(0.0);
    entries.push(entry(
        "shape2",
        pw > 0.0,
        pw,
        0.0,
        format!("Payne-Weinberger bound for the unit ball in R^{m}"),
    ));

    let rhos: Vec<f64> = refs.iter().map(|&e| rho_of(e)).collect();
    entries.push(entry(
        "a1",
        strictly_decreasing(&rhos) && rho <= 1.0,
        rho,
        1.0,
        format!("rho along eps/2^k: {}", fmt_seq(&rhos)),
    ));

    let (dist_ratio, inside_gamma) = clearance(plan);
    let radius_ratio = if r_max > 0.0 { rho / r_max } else { f64::INFINITY };
    let a2_measured = dist_ratio.min(radius_ratio);
    entries.push(entry(
        "a2",
        dist_ratio >= 1.0 - 1e-12 && radius_ratio > 1.0 && inside_gamma,
        a2_measured,
        1.0,
        format!(
            "min centre distance / 2 rho = {dist_ratio:.6}, rho / max radius = {radius_ratio:.6}, holes inside Gamma: {inside_gamma}"
        ),
    ));

    let mut slack = f64::INFINITY;
    for h in &plan.holes {
        for c in &h.center {
            slack = slack.min(0.5 * dom.edge - c.abs() - rho);
        }
        let depth = match (dom.topology, h.side) {
            (Topology::Interface, Side::Plus) => dom.depth_plus,
            _ => dom.depth_minus,
        };
        slack = slack.min(depth - rho);
    }
    entries.push(entry(
        "a3",
        slack >= 0.0,
        slack,
        0.0,
        "smallest gap between a clearance half-ball and the boundary of Omega".into(),
    ));

    let a4_now = plan
        .holes
        .iter()
        .map(|h| rho.powi(mi) * q(h.radius))
        .fold(0.0, f64::max);
    let a4_seq: Vec<f64> = refs.iter().map(|&e| rho_of(e).powi(mi) * q(r_min_of(e))).collect();
    entries.push(entry(
        "a4",
        strictly_decreasing(&a4_seq) && a4_seq.iter().all(|v| *v > 0.0),
        a4_now,
        0.0,
        format!("sup rho^(n-1) q along eps/2^k: {}", fmt_seq(&a4_seq)),
    ));

    entries.push(entry(
        "a5",
        h_eps < 1.0,
        h_eps,
        1.0,
        "h_eps = sup passage height".into(),
    ));

    let c_now = plan
        .passages
        .iter()
        .map(|p| p.coupling / rho.powi(mi))
        .fold(0.0, f64::max);
    let c_seq: Vec<f64> = refs
        .iter()
        .map(|&e| {
            let h = omega * d_of(e).powi(mi) * e.powi(2 * (1 - dom.n as i32));
            omega * r_max_of(e).powi(mi) / h / rho_of(e).powi(mi)
        })
        .collect();
    let no_growth = c_seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    entries.push(entry(
        "main1",
        no_growth && c_now.is_finite(),
        c_now,
        f64::NAN,
        format!("sup K_ij / rho^(n-1) along eps/2^k: {}", fmt_seq(&c_seq)),
    ));

    entries.push(main2_entry(plan, &refs));

    let drho_now = if rho > 0.0 { r_max / rho } else { f64::INFINITY };
    let drho_bound = h_eps.powf(1.0 / m as f64);
    entries.push(entry(
        "drho",
        drho_now <= drho_bound * (1.0 + 1e-12),
        drho_now,
        drho_bound,
        "sup d_i / rho_i against h_eps^(1/(n-1))".into(),
    ));
    entries.push(entry(
        "2drho",
        2.0 * r_max <= rho,
        2.0 * r_max / rho,
        1.0,
        "sup 2 d_i / rho_i".into(),
    ));

    let law5: Vec<f64> = refs.iter().map(|&e| d_of(e) / (e * e)).collect();
    entries.push(entry(
        "d-law-5+",
        strictly_decreasing(&law5),
        law5[0],
        0.0,
        format!("d_eps eps^-2 along eps/2^k: {}", fmt_seq(&law5)),
    ));
    let law4: Vec<f64> = refs
        .iter()
        .map(|&e| {
            if dom.n == 2 {
                (e * e * d_of(e).ln()).abs()
            } else {
                e.powi(2 * mi) * d_of(e).powi(2 - dom.n as i32)
            }
        })
        .collect();
    entries.push(entry(
        "d-law-4+",
        strictly_decreasing(&law4),
        law4[0],
        0.0,
        format!("d-law growth quantity along eps/2^k: {}", fmt_seq(&law4)),
    ));

    AuditReport {
        eps,
        entries,
        lambda_n_bounds: vec![(format!("unit ball in R^{m}"), pw)],
    }
}

fn main2_entry(plan: &SievePlan, refs: &[f64]) -> AuditEntry {
    let dom = &plan.domain;
    let m = dom.n - 1;
    let cells = if m == 1 { 512 } else { 48 };
    let quad = GammaQuadrature::midpoint(dom.gamma_extent(), cells);
    let exact = match double_integral(&plan.kernel, |_, _| 1.0, &quad) {
        Ok(v) => v,
        Err(e) => return entry("main2", false, f64::NAN, 0.0, format!("quadrature failed: {e}")),
    };
    let orientations = match dom.topology {
        Topology::Interface => 1.0,
        Topology::Boundary => 2.0,
    };
    let now: f64 = plan.passages.iter().map(|p| p.coupling).sum::<f64>() * orientations;
    let mut residuals = vec![(now - exact).abs()];
    let area_factor = plan.hole_scale.powi(m as i32);
    for &e in &refs[1..refs.len() - 1] {
        match link_sum(dom, e, &plan.kernel, |_, _| 1.0) {
            Ok(s) => residuals.push((area_factor * s - exact).abs()),
            Err(_) => break,
        }
    }
    let passed = residuals.len() >= 2 && strictly_decreasing(&residuals);
    entry(
        "main2",
        passed,
        residuals[0],
        0.0,
        format!("|sum K_ij - int int K| along eps/2^k: {}", fmt_seq(&residuals)),
    )
}

/// Minimum over same-side hole pairs of `|x_i - x_k| / (2 rho)`, and whether
/// every hole lies inside the closed interface.
fn clearance(plan: &SievePlan) -> (f64, bool) {
    let rho = plan.rho;
    let half = 0.5 * plan.domain.edge;
    let inside = plan
        .holes
        .iter()
        .all(|h| h.center.iter().all(|c| c.abs() + h.radius <= half));
    if rho <= 0.0 {
        return (0.0, inside);
    }
    let bucket = 2.0 * rho;
    let key = |h: &super::Hole| -> (Side, Vec<i64>) {
        (h.side, h.center.iter().map(|c| (c / bucket).floor() as i64).collect())
    };
    let mut grid: HashMap<(Side, Vec<i64>), Vec<usize>> = HashMap::new();
    for (i, h) in plan.holes.iter().enumerate() {
        grid.entry(key(h)).or_default().push(i);
    }
    let m = plan.n() - 1;
    let offsets: Vec<Vec<i64>> = if m == 1 {
        vec![vec![-1], vec![0], vec![1]]
    } else {
        let mut v = Vec::new();
        for a in -1..=1 {
            for b in -1..=1 {
                v.push(vec![a, b]);
            }
        }
        v
    };
    let mut min_ratio = f64::INFINITY;
    for (i, h) in plan.holes.iter().enumerate() {
        let (side, base) = key(h);
        for off in &offsets {
            let cell: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(list) = grid.get(&(side, cell)) {
                for &k in list {
                    if k <= i {
                        continue;
                    }
                    let d2: f64 = h
                        .center
                        .iter()
                        .zip(&plan.holes[k].center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    min_ratio = min_ratio.min(d2.sqrt() / bucket);
                }
            }
        }
    }
    // pairs in non-adjacent buckets are at least one bucket apart
    (if min_ratio.is_finite() { min_ratio } else { 1.0 }, inside)
}
