//! Box domains, the cube-lattice sieve plan and the assumption audit.

mod audit;
mod plan;

pub use audit::{
    audit_assumptions, lambda_n_lower_bound, link_sum, quadrature_convergence_check, AuditEntry, AuditReport,
    HoleShape, AUDIT_IDS,
};
pub use plan::{build_sieve_plan, Cell, DLaw, Hole, Passage, Side, SievePlan};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};
use crate::kernel::GammaExtent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// `Gamma` splits `Omega` into an upper and a lower part.
    Interface,
    /// `Gamma` is the top face of `Omega`, which lies below it.
    Boundary,
}

/// `Omega = (-L/2, L/2)^{n-1} x (-depth_minus, depth_plus)`, with
/// `depth_plus = 0` in the boundary topology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitDomain {
    pub n: usize,
    pub edge: f64,
    pub depth_minus: f64,
    pub depth_plus: f64,
    pub topology: Topology,
}

impl LimitDomain {
    pub fn interface(n: usize, edge: f64, depth_minus: f64, depth_plus: f64) -> Result<Self> {
        let dom = Self {
            n,
            edge,
            depth_minus,
            depth_plus,
            topology: Topology::Interface,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn boundary(n: usize, edge: f64, depth: f64) -> Result<Self> {
        let dom = Self {
            n,
            edge,
            depth_minus: depth,
            depth_plus: 0.0,
            topology: Topology::Boundary,
        };
        dom.validate()?;
        Ok(dom)
    }

    /// The unit square `(-1/2, 1/2)^2` split at `x^2 = 0`.
    pub fn unit_square() -> Self {
        Self {
            n: 2,
            edge: 1.0,
            depth_minus: 0.5,
            depth_plus: 0.5,
            topology: Topology::Interface,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(SieveError::Geometry(format!("dimension {} unsupported", self.n)));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.edge) || !positive(self.depth_minus) {
            return Err(SieveError::Geometry(format!("non-positive box extents in {self:?}")));
        }
        match self.topology {
            Topology::Interface if !positive(self.depth_plus) => Err(SieveError::Geometry(
                "interface topology needs the origin inside Omega (depth_plus > 0)".into(),
            )),
            Topology::Boundary if self.depth_plus != 0.0 => Err(SieveError::Geometry(
                "boundary topology puts Gamma on the top face (depth_plus = 0)".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn gamma_extent(&self) -> GammaExtent {
        GammaExtent {
            dim: self.n - 1,
            edge: self.edge,
        }
    }

    pub fn volume(&self) -> f64 {
        self.edge.powi(self.n as i32 - 1) * (self.depth_minus + self.depth_plus)
    }

    /// Membership in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        let (tan, normal) = x.split_at(self.n - 1);
        tan.iter().all(|c| c.abs() < 0.5 * self.edge) && normal[0] > -self.depth_minus && normal[0] < self.depth_plus
    }
}

/// `vol_{k}` of the unit ball in `R^k` for `k = 1, 2`.
pub(crate) fn unit_ball_volume(k: usize) -> f64 {
    match k {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unreachable!("hole dimension {k}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_validation() {
        assert!(LimitDomain::interface(2, 1.0, 0.5, 0.5).is_ok());
        assert!(LimitDomain::interface(2, 1.0, 0.5, 0.0).is_err());
        assert!(LimitDomain::interface(4, 1.0, 0.5, 0.5).is_err());
        assert!(LimitDomain::boundary(2, 1.0, 1.0).is_ok());
        assert!(LimitDomain::boundary(2, -1.0, 1.0).is_err());
    }

    #[test]
    fn open_box_membership() {
        let d = LimitDomain::unit_square();
        assert!(d.contains(&[0.0, 0.0]));
        assert!(!d.contains(&[0.5, 0.0]));
        assert!(!d.contains(&[0.0, -0.5]));
        assert_eq!(d.volume(), 1.0);
    }
}
