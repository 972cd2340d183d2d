//! Heat flow `u' + (A + B + C) u = 0` in the `M` inner product.

use serde::{Deserialize, Serialize};

use crate::assembly::OperatorPair;
use crate::error::{Result, SieveError};
use crate::solvers::{solve_shifted_rhs, CgOptions, SolveStats};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatOptions {
    pub t_final: f64,
    pub steps: usize,
    /// Number of stored states after `t = 0` (must divide `steps`).
    pub samples: usize,
    /// `1` is backward Euler, `1/2` Crank–Nicolson.
    pub theta: f64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            steps: 128,
            samples: 16,
            theta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolveStats,
}

/// Mass `1^T M v`, `||v||_M` and energy `v^T (A + B + C) v` of one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub mass: f64,
    pub m_norm: f64,
    pub energy: f64,
}

impl Trajectory {
    pub fn diagnostics(&self, op: &OperatorPair) -> Vec<StateDiagnostics> {
        let ones_m = op.apply_mass(&vec![1.0; op.dim()]);
        self.states
            .iter()
            .map(|v| StateDiagnostics {
                mass: ones_m.iter().zip(v).map(|(a, b)| a * b).sum(),
                m_norm: op.mass_norm(v),
                energy: op.energy(v),
            })
            .collect()
    }
}

/// Theta-scheme: each step solves
/// `(A + sigma M) u_{k+1} = sigma M u_k - (1 - theta)/theta A u_k`
/// with `sigma = 1 / (theta dt)`.
pub fn heat_evolve(op: &OperatorPair, u0: &[f64], opts: &HeatOptions, cg: &CgOptions) -> Result<Trajectory> {
    if u0.len() != op.dim() {
        return Err(SieveError::Assembly(format!(
            "initial state has length {}, operator {}",
            u0.len(),
            op.dim()
        )));
    }
    if !(opts.theta > 0.0 && opts.theta <= 1.0) || opts.steps == 0 || !(opts.t_final > 0.0) {
        return Err(SieveError::Config(format!("bad heat options {opts:?}")));
    }
    if opts.samples == 0 || !opts.steps.is_multiple_of(opts.samples) {
        return Err(SieveError::Config(format!(
            "samples ({}) must divide steps ({})",
            opts.samples, opts.steps
        )));
    }
    let dt = opts.t_final / opts.steps as f64;
    let sigma = 1.0 / (opts.theta * dt);
    let explicit = (1.0 - opts.theta) / opts.theta;
    let every = opts.steps / opts.samples;

    let mut u = u0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    let mut stats = SolveStats::default();
    for step in 1..=opts.steps {
        let mut rhs = op.apply_mass(&u);
        for v in &mut rhs {
            *v *= sigma;
        }
        if explicit != 0.0 {
            let au = op.apply_form(&u);
            for (r, a) in rhs.iter_mut().zip(&au) {
                *r -= explicit * a;
            }
        }
        let (next, s) = solve_shifted_rhs(op, &rhs, sigma, Some(&u), cg)?;
        stats.iterations += s.iterations;
        stats.residual = stats.residual.max(s.residual);
        stats.wall_ms += s.wall_ms;
        u = next;
        if step % every == 0 {
            times.push(step as f64 * dt);
            states.push(u.clone());
        }
    }
    Ok(Trajectory { times, states, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_p1;
    use crate::geometry::LimitDomain;
    use crate::mesh::{mesh_limit_domain, Grading};

    #[test]
    fn mass_is_conserved_and_energy_decays() {
        let dom = LimitDomain::unit_square();
        let lm = mesh_limit_domain(&dom, 0.125, &Grading::none(), 15.0).unwrap();
        let op = assemble_p1(&lm.mesh).unwrap();
        let u0 = lm.interpolate(|x, y| if x > 0.0 { 1.0 } else { 0.0 } + y);
        let opts = HeatOptions {
            t_final: 0.1,
            steps: 20,
            samples: 4,
            theta: 0.5,
        };
        let tr = heat_evolve(&op, &u0, &opts, &CgOptions::default()).unwrap();
        assert_eq!(tr.states.len(), 5);
        let diag = tr.diagnostics(&op);
        for w in diag.windows(2) {
            assert!((w[1].mass - diag[0].mass).abs() < 1e-10);
            assert!(w[1].energy <= w[0].energy + 1e-12);
            assert!(w[1].m_norm <= w[0].m_norm + 1e-12);
        }
    }

    #[test]
    fn samples_must_divide_steps() {
        let dom = LimitDomain::unit_square();
        let lm = mesh_limit_domain(&dom, 0.25, &Grading::none(), 15.0).unwrap();
        let op = assemble_p1(&lm.mesh).unwrap();
        let opts = HeatOptions {
            samples: 3,
            ..HeatOptions::default()
        };
        assert!(heat_evolve(&op, &vec![0.0; op.dim()], &opts, &CgOptions::default()).is_err());
    }
}
