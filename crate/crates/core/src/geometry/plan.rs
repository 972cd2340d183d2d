use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{unit_ball_volume, LimitDomain, Topology};
use crate::error::{Result, SieveError};
use crate::kernel::InterfaceKernel;

/// `d_eps = c * eps^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DLaw {
    pub c: f64,
    pub p: f64,
}

impl DLaw {
    pub fn cubic() -> Self {
        Self { c: 1.0, p: 3.0 }
    }

    pub fn d(&self, eps: f64) -> f64 {
        self.c * eps.powf(self.p)
    }
}

impl Default for DLaw {
    fn default() -> Self {
        Self::cubic()
    }
}

/// A lattice cube `Gamma_{s,eps}` with multi-index `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: Vec<i64>,
    pub center: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Plus,
    Minus,
}

/// A ball-shaped hole `D_{(s,t)}` on one side of the interface; `s` and `t`
/// index [`SievePlan::cells`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub side: Side,
    pub s: usize,
    pub t: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// `vol_{n-1}` of the hole.
    pub area: f64,
}

/// Passage between holes `a` and `b`. In the interface topology `a` is on
/// the plus side and `b = l(a)` on the minus side; in the boundary topology
/// each unordered pair `{(s,t), (t,s)}` carries one passage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// `K_ij = area / height`.
    pub coupling: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SievePlan {
    pub domain: LimitDomain,
    pub eps: f64,
    pub d_law: DLaw,
    pub d_eps: f64,
    /// Clearance radius, common to all holes.
    pub rho: f64,
    /// Factor applied to every hole radius after construction (1 for
    /// unmodified plans).
    pub hole_scale: f64,
    pub kernel: InterfaceKernel,
    pub cells: Vec<Cell>,
    pub holes: Vec<Hole>,
    pub passages: Vec<Passage>,
}

/// Builds the cube-lattice sieve on `dom` at scale `eps`.
pub fn build_sieve_plan(dom: &LimitDomain, eps: f64, d_law: DLaw, kernel: &InterfaceKernel) -> Result<SievePlan> {
    dom.validate()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SieveError::Geometry(format!("eps = {eps} outside (0, 1)")));
    }
    if !(d_law.c > 0.0 && d_law.p > 0.0) {
        return Err(SieveError::Geometry(format!("d-law {d_law:?} needs c, p > 0")));
    }
    if kernel.extent() != dom.gamma_extent() {
        return Err(SieveError::Geometry(format!(
            "kernel lives on {:?}, domain interface is {:?}",
            kernel.extent(),
            dom.gamma_extent()
        )));
    }
    let d_eps = d_law.d(eps);
    if d_eps >= eps * eps {
        return Err(SieveError::PlanViolation {
            assumption: "d-law-5+",
            detail: format!("d_eps = {d_eps:e} is not below eps^2 = {:e}", eps * eps),
        });
    }

    let cells = admissible_cells(dom, eps);
    let min_cells = match dom.topology {
        Topology::Interface => 1,
        Topology::Boundary => 2,
    };
    if cells.len() < min_cells {
        return Err(SieveError::Geometry(format!(
            "eps = {eps} admits {} cells, need at least {min_cells}",
            cells.len()
        )));
    }

    let m = dom.n - 1;
    let edge = dom.edge;
    let rho = eps * eps / edge / 2.0;
    let omega = unit_ball_volume(m);
    let height = omega * d_eps.powi(m as i32) * eps.powi(2 * (1 - dom.n as i32));

    let sub_center = |s: usize, t: usize| -> Vec<f64> {
        (0..m)
            .map(|k| eps * eps / edge * cells[t].index[k] as f64 + eps * cells[s].index[k] as f64)
            .collect()
    };
    let nc = cells.len();
    let mut alpha = vec![0.0; nc * nc];
    for s in 0..nc {
        for t in 0..nc {
            let kst = kernel.evaluate(&sub_center(s, t), &sub_center(t, s))?;
            alpha[s * nc + t] = kst.powf(1.0 / m as f64);
        }
    }
    let make_hole = |side: Side, s: usize, t: usize| -> Result<Hole> {
        let radius = alpha[s * nc + t] * d_eps;
        if radius >= rho {
            return Err(SieveError::PlanViolation {
                assumption: "a2",
                detail: format!("hole ({s},{t}) radius {radius:e} reaches half the subcell edge {rho:e}"),
            });
        }
        Ok(Hole {
            side,
            s,
            t,
            center: sub_center(s, t),
            radius,
            area: omega * radius.powi(m as i32),
        })
    };

    let mut holes = Vec::new();
    let mut passages = Vec::new();
    match dom.topology {
        Topology::Interface => {
            for side in [Side::Plus, Side::Minus] {
                for s in 0..nc {
                    for t in 0..nc {
                        holes.push(make_hole(side, s, t)?);
                    }
                }
            }
            for s in 0..nc {
                for t in 0..nc {
                    let a = s * nc + t;
                    let b = nc * nc + t * nc + s;
                    passages.push(Passage {
                        a,
                        b,
                        height,
                        coupling: holes[a].area / height,
                    });
                }
            }
        }
        Topology::Boundary => {
            let mut slot = vec![usize::MAX; nc * nc];
            for s in 0..nc {
                for t in 0..nc {
                    if s != t {
                        slot[s * nc + t] = holes.len();
                        holes.push(make_hole(Side::Plus, s, t)?);
                    }
                }
            }
            for s in 0..nc {
                for t in (s + 1)..nc {
                    let a = slot[s * nc + t];
                    passages.push(Passage {
                        a,
                        b: slot[t * nc + s],
                        height,
                        coupling: holes[a].area / height,
                    });
                }
            }
        }
    }

    Ok(SievePlan {
        domain: *dom,
        eps,
        d_law,
        d_eps,
        rho,
        hole_scale: 1.0,
        kernel: kernel.clone(),
        cells,
        holes,
        passages,
    })
}

/// Lattice cells whose slab `cell x (-eps, eps)` (or `(-eps, 0)` in the
/// boundary topology) lies strictly inside `Omega`, in lexicographic order.
pub(crate) fn admissible_cells(dom: &LimitDomain, eps: f64) -> Vec<Cell> {
    let fits_normal = match dom.topology {
        Topology::Interface => eps < dom.depth_minus && eps < dom.depth_plus,
        Topology::Boundary => eps < dom.depth_minus,
    };
    if !fits_normal {
        return Vec::new();
    }
    let half = 0.5 * dom.edge;
    let reach = (half / eps).ceil() as i64 + 1;
    let axis: Vec<i64> = (-reach..=reach)
        .filter(|&s| (eps * s as f64).abs() + 0.5 * eps < half)
        .collect();
    let mut cells = Vec::new();
    match dom.n {
        2 => {
            for &s in &axis {
                cells.push(Cell {
                    index: vec![s],
                    center: vec![eps * s as f64],
                });
            }
        }
        _ => {
            for &s1 in &axis {
                for &s2 in &axis {
                    cells.push(Cell {
                        index: vec![s1, s2],
                        center: vec![eps * s1 as f64, eps * s2 as f64],
                    });
                }
            }
        }
    }
    cells
}

impl SievePlan {
    pub fn n(&self) -> usize {
        self.domain.n
    }

    pub fn topology(&self) -> Topology {
        self.domain.topology
    }

    /// `h_eps = sup h_ij` (0 for a plan without passages).
    pub fn h_eps(&self) -> f64 {
        self.passages.iter().map(|p| p.height).fold(0.0, f64::max)
    }

    /// Total passage volume `sum h_ij vol(D_i)`.
    pub fn passage_volume(&self) -> f64 {
        self.passages.iter().map(|p| p.height * self.holes[p.a].area).sum()
    }

    /// Hole paired with each hole through its passage (`usize::MAX` when
    /// the hole carries no passage).
    pub fn partner(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.holes.len()];
        for p in &self.passages {
            out[p.a] = p.b;
            out[p.b] = p.a;
        }
        out
    }

    /// Copy with every hole radius multiplied by `factor`; couplings are
    /// recomputed as area / height. No validity checks are made, so the
    /// result may violate the plan invariants on purpose.
    pub fn with_hole_scale(&self, factor: f64) -> SievePlan {
        let m = self.n() - 1;
        let omega = unit_ball_volume(m);
        let mut out = self.clone();
        out.hole_scale *= factor;
        for h in &mut out.holes {
            h.radius *= factor;
            h.area = omega * h.radius.powi(m as i32);
        }
        for p in &mut out.passages {
            p.coupling = out.holes[p.a].area / p.height;
        }
        out
    }

    /// Degenerate copy with no holes and no passages.
    pub fn without_passages(&self) -> SievePlan {
        let mut out = self.clone();
        out.holes.clear();
        out.passages.clear();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SievePlan> {
        let plan: SievePlan = serde_json::from_str(text)?;
        plan.check_indices()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SievePlan> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_indices(&self) -> Result<()> {
        self.domain.validate()?;
        let nc = self.cells.len();
        let m = self.n() - 1;
        for (k, h) in self.holes.iter().enumerate() {
            if h.s >= nc || h.t >= nc || h.center.len() != m {
                return Err(SieveError::Geometry(format!("hole {k} references a missing cell")));
            }
        }
        for (k, p) in self.passages.iter().enumerate() {
            if p.a >= self.holes.len() || p.b >= self.holes.len() || p.a == p.b {
                return Err(SieveError::Geometry(format!("passage {k} has invalid ends")));
            }
            if !(p.height > 0.0) {
                return Err(SieveError::Geometry(format!("passage {k} has height {}", p.height)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::InterfaceKernel;

    fn unit_plan(eps: f64) -> SievePlan {
        let dom = LimitDomain::unit_square();
        let k = InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap();
        build_sieve_plan(&dom, eps, DLaw::cubic(), &k).unwrap()
    }

    #[test]
    fn quarter_plan_heights_and_couplings() {
        let plan = unit_plan(0.25);
        assert_eq!(plan.cells.len(), 3);
        assert_eq!(plan.passages.len(), 9);
        for p in &plan.passages {
            assert!((p.height - 0.5).abs() < 1e-15);
            assert!((p.coupling - 0.0625).abs() < 1e-15);
        }
    }

    #[test]
    fn eighth_plan_counts() {
        let plan = unit_plan(0.125);
        let idx: Vec<i64> = plan.cells.iter().map(|c| c.index[0]).collect();
        assert_eq!(idx, (-3..=3).collect::<Vec<_>>());
        assert_eq!(plan.passages.len(), 49);
        assert_eq!(plan.holes.len(), 98);
    }

    #[test]
    fn rejects_large_d() {
        let dom = LimitDomain::unit_square();
        let k = InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap();
        let err = build_sieve_plan(&dom, 0.25, DLaw { c: 1.0, p: 2.0 }, &k).unwrap_err();
        assert!(matches!(
            err,
            SieveError::PlanViolation {
                assumption: "d-law-5+",
                ..
            }
        ));
    }

    #[test]
    fn rejects_touching_holes() {
        let dom = LimitDomain::unit_square();
        // alpha = 40 makes the holes wider than their subcells at eps = 1/4
        let k = InterfaceKernel::constant(40.0, dom.gamma_extent()).unwrap();
        let err = build_sieve_plan(&dom, 0.25, DLaw::cubic(), &k).unwrap_err();
        assert!(matches!(err, SieveError::PlanViolation { assumption: "a2", .. }));
    }

    #[test]
    fn boundary_plan_skips_diagonal() {
        let dom = LimitDomain::boundary(2, 1.0, 1.0).unwrap();
        let k = InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap();
        let plan = build_sieve_plan(&dom, 0.125, DLaw::cubic(), &k).unwrap();
        assert_eq!(plan.holes.len(), 42);
        assert_eq!(plan.passages.len(), 21);
        assert!(plan.holes.iter().all(|h| h.s != h.t));
        let partner = plan.partner();
        for (i, &j) in partner.iter().enumerate() {
            assert_ne!(i, j);
            assert_eq!(partner[j], i);
            assert_eq!(plan.holes[i].s, plan.holes[j].t);
        }
    }

    #[test]
    fn json_round_trip() {
        let plan = unit_plan(0.25);
        let back = SievePlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn scaled_holes_keep_heights() {
        let plan = unit_plan(0.125).with_hole_scale(2.0);
        for p in &plan.passages {
            assert!((p.coupling * p.height - plan.holes[p.a].area).abs() < 1e-18);
            assert!((p.coupling - 2.0 / 64.0).abs() < 1e-15);
        }
    }
}
