//! Jacobi-preconditioned CG for shifted forms and a deflated LOBPCG for the
//! low end of the spectrum.

mod lobpcg;

pub use lobpcg::{lobpcg, EigenOptions, EigenResult, Preconditioner};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{dot, OperatorPair};
use crate::error::{Result, SieveError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop once `||r|| <= tol * ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50_000,
        }
    }
}

/// `x^T (A + B + C) x / x^T M x`.
pub fn rayleigh_quotient(op: &OperatorPair, x: &[f64]) -> f64 {
    op.energy(x) / op.mass.bilinear(x, x)
}

/// Solves `(A + B + C + sigma M) u = M f`.
pub fn solve_shifted(op: &OperatorPair, f: &[f64], sigma: f64, opts: &CgOptions) -> Result<(Vec<f64>, SolveStats)> {
    let rhs = op.apply_mass(f);
    solve_shifted_rhs(op, &rhs, sigma, None, opts)
}

/// Solves `(A + B + C + sigma M) u = rhs` by Jacobi-preconditioned CG.
///
/// Constants lie in the kernel of `A + B + C`, so the constant part of the
/// solution is fixed up front (when no start is given) and re-balanced after
/// the iteration.
pub fn solve_shifted_rhs(
    op: &OperatorPair,
    rhs: &[f64],
    sigma: f64,
    x0: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = op.dim();
    if rhs.len() != n {
        return Err(SieveError::Assembly(format!(
            "rhs has length {}, operator {n}",
            rhs.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(SieveError::Assembly(format!("shift {sigma} must be positive")));
    }
    let ones = vec![1.0; n];
    let vol = op.volume();
    let diag: Vec<f64> = op
        .form_diagonal()
        .iter()
        .zip(op.mass.diagonal())
        .map(|(a, m)| a + sigma * m)
        .collect();
    let shifted = op.stiffness.linear_combination(1.0, &op.mass, sigma)?;
    let apply = |x: &[f64], y: &mut [f64]| {
        shifted.mul_vec(x, y);
        if let Some(b) = &op.nonlocal {
            b.apply_add(x, y);
        }
        if let Some(c) = &op.couplings {
            c.apply_add(x, y);
        }
    };

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![rhs.iter().sum::<f64>() / (sigma * vol); n],
    };
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats::default()));
    }
    let mut q = vec![0.0; n];
    let mut it = 0;
    let mut final_res = f64::INFINITY;
    // a few restarts from the true residual absorb the drift of the
    // recursively updated one
    for _ in 0..4 {
        let mut r = vec![0.0; n];
        apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let mut z = vec![0.0; n];
        shifted.symmetric_gauss_seidel(&diag, &r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut res = dot(&r, &r).sqrt() / bnorm;
        while res > opts.tol && it < opts.max_iter {
            apply(&p, &mut q);
            let alpha = rz / dot(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            shifted.symmetric_gauss_seidel(&diag, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            res = dot(&r, &r).sqrt() / bnorm;
            it += 1;
        }

        // true residual, then remove its constant component
        apply(&x, &mut q);
        let r_true: Vec<f64> = rhs.iter().zip(&q).map(|(b, a)| b - a).collect();
        let c = dot(&ones, &r_true) / (sigma * vol);
        for xi in &mut x {
            *xi += c;
        }
        apply(&x, &mut q);
        final_res = rhs.iter().zip(&q).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt() / bnorm;
        if final_res <= opts.tol || it >= opts.max_iter {
            break;
        }
    }
    let stats = SolveStats {
        iterations: it,
        residual: final_res,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    if !(final_res <= 10.0 * opts.tol) {
        return Err(SieveError::NotConverged { stats });
    }
    Ok((x, stats))
}
