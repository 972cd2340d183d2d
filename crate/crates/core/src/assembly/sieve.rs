use super::{add_p1, assemble_nonlocal_interface, assemble_robin_nonlocal, OperatorPair, OperatorTag};
use crate::error::{Result, SieveError};
use crate::geometry::{Side, SievePlan, Topology};
use crate::kernel::InterfaceKernel;
use crate::mesh::{GluedMesh, LimitMesh};
use crate::sparse::TripletBuilder;

/// One reduced passage: energy `weight * (mean_a u - mean_b u)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub weight: f64,
    /// Footprint mean weights of hole `a` (they sum to one).
    pub a: Vec<(usize, f64)>,
    pub b: Vec<(usize, f64)>,
    /// `a - b` with repeated DOFs merged.
    g: Vec<(usize, f64)>,
}

impl Coupling {
    pub fn new(weight: f64, a: Vec<(usize, f64)>, b: Vec<(usize, f64)>) -> Self {
        let mut g: Vec<(usize, f64)> = a.iter().copied().chain(b.iter().map(|&(i, w)| (i, -w))).collect();
        g.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(g.len());
        for (i, w) in g {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        Self {
            weight,
            a,
            b,
            g: merged,
        }
    }

    /// `mean_a u - mean_b u`.
    pub fn jump(&self, u: &[f64]) -> f64 {
        self.g.iter().map(|&(i, w)| w * u[i]).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CouplingBlock {
    pub couplings: Vec<Coupling>,
}

impl CouplingBlock {
    pub fn len(&self) -> usize {
        self.couplings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty()
    }

    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        for c in &self.couplings {
            let s = c.weight * c.jump(x);
            for &(i, w) in &c.g {
                y[i] += s * w;
            }
        }
    }

    pub fn add_diagonal(&self, d: &mut [f64]) {
        for c in &self.couplings {
            for &(i, w) in &c.g {
                d[i] += c.weight * w * w;
            }
        }
    }

    /// Per-passage energies `weight * jump^2`.
    pub fn energies(&self, u: &[f64]) -> Vec<f64> {
        self.couplings.iter().map(|c| c.weight * c.jump(u).powi(2)).collect()
    }
}

/// Weights `g_k` with `sum_k g_k u_k` the exact mean of the piecewise linear
/// trace `u` over `[center - radius, center + radius]`.
pub fn footprint_mean_weights(gamma_x: &[f64], trace: &[usize], center: f64, radius: f64) -> Result<Vec<(usize, f64)>> {
    let (lo, hi) = (center - radius, center + radius);
    let n = gamma_x.len();
    if n < 2 || trace.len() != n || !(radius > 0.0) || lo < gamma_x[0] || hi > gamma_x[n - 1] {
        return Err(SieveError::Assembly(format!(
            "footprint [{lo}, {hi}] is not inside the trace"
        )));
    }
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut push = |k: usize, v: f64| {
        if v == 0.0 {
            return;
        }
        match out.last_mut() {
            Some(last) if last.0 == trace[k] => last.1 += v,
            _ => out.push((trace[k], v)),
        }
    };
    let start = gamma_x.partition_point(|&x| x <= lo).saturating_sub(1).min(n - 2);
    for k in start..n - 1 {
        let (x0, x1) = (gamma_x[k], gamma_x[k + 1]);
        if x0 >= hi {
            break;
        }
        let (p, q) = (lo.max(x0), hi.min(x1));
        if q <= p {
            continue;
        }
        let h = x1 - x0;
        // integrals of the two hats over [p, q]
        let left = ((x1 - p).powi(2) - (x1 - q).powi(2)) / (2.0 * h);
        let right = ((q - x0).powi(2) - (p - x0).powi(2)) / (2.0 * h);
        push(k, left / (hi - lo));
        push(k + 1, right / (hi - lo));
    }
    Ok(out)
}

fn tag_for(topology: Topology, reduced: bool) -> OperatorTag {
    match (topology, reduced) {
        (Topology::Interface, true) => OperatorTag::SieveReduced,
        (Topology::Interface, false) => OperatorTag::SieveFull,
        (Topology::Boundary, _) => OperatorTag::RobinSieve,
    }
}

fn p1_on(lmesh: &LimitMesh) -> Result<(TripletBuilder, TripletBuilder)> {
    let n = lmesh.vertex_count();
    let cap = 9 * lmesh.mesh.triangles.len();
    let mut a = TripletBuilder::with_capacity(n, cap);
    let mut m = TripletBuilder::with_capacity(n, cap);
    add_p1(&mut a, &mut m, &lmesh.mesh, None)?;
    Ok((a, m))
}

/// Limit operator: P1 bulk plus the non-local block of `kernel`
/// (interface or Robin according to the mesh topology).
pub fn assemble_limit_operator(lmesh: &LimitMesh, kernel: &InterfaceKernel) -> Result<OperatorPair> {
    let (a, m) = p1_on(lmesh)?;
    let (tag, block) = match lmesh.domain.topology {
        Topology::Interface => (OperatorTag::Limit, assemble_nonlocal_interface(lmesh, kernel)?),
        Topology::Boundary => (OperatorTag::RobinLimit, assemble_robin_nonlocal(lmesh, kernel)?),
    };
    Ok(OperatorPair {
        tag,
        stiffness: a.finish()?,
        mass: m.finish()?,
        nonlocal: Some(block),
        couplings: None,
    })
}

/// Sieve with every passage collapsed to a rank-one coupling between the
/// footprint means of its two holes, on the unperforated limit mesh.
pub fn assemble_reduced_sieve(lmesh: &LimitMesh, plan: &SievePlan) -> Result<OperatorPair> {
    if plan.domain != lmesh.domain {
        return Err(SieveError::Assembly("plan and mesh live on different domains".into()));
    }
    let trace = |side: Side| match side {
        Side::Plus => &lmesh.trace_plus,
        Side::Minus => &lmesh.trace_minus,
    };
    let mut couplings = Vec::with_capacity(plan.passages.len());
    for p in &plan.passages {
        let (ha, hb) = (&plan.holes[p.a], &plan.holes[p.b]);
        let a = footprint_mean_weights(&lmesh.gamma_x, trace(ha.side), ha.center[0], ha.radius)?;
        let b = footprint_mean_weights(&lmesh.gamma_x, trace(hb.side), hb.center[0], hb.radius)?;
        couplings.push(Coupling::new(p.coupling, a, b));
    }
    let (a, m) = p1_on(lmesh)?;
    Ok(OperatorPair {
        tag: tag_for(plan.topology(), true),
        stiffness: a.finish()?,
        mass: m.finish()?,
        nonlocal: None,
        couplings: Some(CouplingBlock { couplings }),
    })
}

/// P1 on the glued mesh: bulk plus every passage rectangle.
pub fn assemble_sieve_full(glued: &GluedMesh) -> Result<OperatorPair> {
    let n = glued.dof_count;
    let cap =
        9 * (glued.limit.mesh.triangles.len() + glued.passages.iter().map(|p| p.mesh.triangles.len()).sum::<usize>());
    let mut a = TripletBuilder::with_capacity(n, cap);
    let mut m = TripletBuilder::with_capacity(n, cap);
    add_p1(&mut a, &mut m, &glued.limit.mesh, None)?;
    for p in &glued.passages {
        add_p1(&mut a, &mut m, &p.mesh, Some(&p.dofs))?;
    }
    Ok(OperatorPair {
        tag: tag_for(glued.limit.domain.topology, false),
        stiffness: a.finish()?,
        mass: m.finish()?,
        nonlocal: None,
        couplings: None,
    })
}

/// `||u||^2_{L2(T_ij)}` for every passage of the glued mesh.
pub fn passage_l2_norms_sq(glued: &GluedMesh, u: &[f64]) -> Vec<f64> {
    glued
        .passages
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for (t, tri) in p.mesh.triangles.iter().enumerate() {
                let area = p.mesh.signed_area(t);
                let v = tri.map(|k| u[p.dofs[k]]);
                let sum = v[0] + v[1] + v[2];
                let sq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                s += area / 12.0 * (sq + sum * sum);
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprint_weights_sum_to_one_and_reproduce_linears() {
        let xs = [-0.5, -0.2, 0.0, 0.1, 0.5];
        let trace = [10, 11, 12, 13, 14];
        let w = footprint_mean_weights(&xs, &trace, 0.03, 0.15).unwrap();
        let total: f64 = w.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let mean: f64 = w.iter().map(|&(i, g)| g * xs[i - 10]).sum();
        assert!((mean - 0.03).abs() < 1e-15);
    }

    #[test]
    fn footprint_outside_trace_is_rejected() {
        assert!(footprint_mean_weights(&[0.0, 1.0], &[0, 1], 0.95, 0.1).is_err());
    }

    #[test]
    fn coupling_merges_shared_dofs() {
        let c = Coupling::new(2.0, vec![(0, 0.5), (1, 0.5)], vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(c.jump(&[1.0, 5.0, 0.0]), 0.5);
        let blk = CouplingBlock { couplings: vec![c] };
        let mut d = vec![0.0; 3];
        blk.add_diagonal(&mut d);
        assert_eq!(d, vec![0.5, 0.0, 0.5]);
    }
}
