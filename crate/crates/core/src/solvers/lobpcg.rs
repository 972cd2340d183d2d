use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SolveStats;
use crate::assembly::OperatorPair;
use crate::error::{Result, SieveError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preconditioner {
    /// `diag(A + B + C + M)^{-1}`.
    Jacobi,
    /// A few Jacobi-CG steps on `A + B + C + M`.
    InnerCg { iterations: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    /// Residual tolerance relative to the largest Ritz value of the block.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns that need not converge.
    pub guard: usize,
    pub seed: u64,
    pub preconditioner: Preconditioner,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 3000,
            guard: 2,
            seed: 0x5eed,
            preconditioner: Preconditioner::InnerCg { iterations: 12 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending; `values[0] = 0` belongs to the constants.
    pub values: Vec<f64>,
    /// `M`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    /// Relative residuals of `values[1..]`.
    pub residuals: Vec<f64>,
    pub stats: SolveStats,
}

/// Columns of `x` as owned vectors.
fn cols(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect()
}

struct Ops<'a> {
    op: &'a OperatorPair,
    ones_m: Vec<f64>,
    vol: f64,
    mdiag: Vec<f64>,
    jacobi: Vec<f64>,
}

impl Ops<'_> {
    fn a(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (j, c) in cols(x).iter().enumerate() {
            out.set_column(j, &DVector::from_vec(self.op.apply_form(c)));
        }
        out
    }

    fn m(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (j, c) in cols(x).iter().enumerate() {
            out.set_column(j, &DVector::from_vec(self.op.apply_mass(c)));
        }
        out
    }

    /// Removes the `M`-projection onto the constants.
    fn deflate(&self, x: &mut DMatrix<f64>) {
        for mut c in x.column_iter_mut() {
            let s: f64 = c.iter().zip(&self.ones_m).map(|(a, b)| a * b).sum::<f64>() / self.vol;
            c.add_scalar_mut(-s);
        }
    }

    fn precondition(&self, r: &DMatrix<f64>, kind: Preconditioner) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(r.nrows(), r.ncols());
        for (j, c) in cols(r).iter().enumerate() {
            let z: Vec<f64> = match kind {
                Preconditioner::Jacobi => c.iter().zip(&self.jacobi).map(|(a, d)| a / d).collect(),
                Preconditioner::InnerCg { iterations } => inner_cg(self, c, iterations),
            };
            out.set_column(j, &DVector::from_vec(z));
        }
        out
    }

    /// `diag(M)^{-1}` norm of each column.
    fn dual_norms(&self, r: &DMatrix<f64>) -> Vec<f64> {
        r.column_iter()
            .map(|c| c.iter().zip(&self.mdiag).map(|(a, m)| a * a / m).sum::<f64>().sqrt())
            .collect()
    }
}

/// Fixed number of Jacobi-CG steps on `A + B + C + M`, started from zero.
fn inner_cg(ops: &Ops, b: &[f64], iterations: usize) -> Vec<f64> {
    let n = b.len();
    let apply = |x: &[f64]| {
        let mut y = ops.op.apply_form(x);
        ops.op.mass.mul_vec_add(1.0, x, &mut y);
        y
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&ops.jacobi).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..iterations {
        if rz <= 0.0 {
            break;
        }
        let q = apply(&p);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] / ops.jacobi[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Rayleigh–Ritz on the span of `s` (with images `as_`, `ms`), dropping
/// directions that are numerically dependent in the `M` inner product.
/// Returns the `nb` smallest Ritz values and coefficient columns.
fn rayleigh_ritz(
    s: &DMatrix<f64>,
    as_: &DMatrix<f64>,
    ms: &DMatrix<f64>,
    nb: usize,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let gm = s.transpose() * ms;
    let ga = s.transpose() * as_;
    let gm = (&gm + gm.transpose()) * 0.5;
    let ga = (&ga + ga.transpose()) * 0.5;
    // scale to unit diagonal before the cut-off
    let d: Vec<f64> = (0..gm.nrows())
        .map(|i| 1.0 / gm[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let dm = DMatrix::from_diagonal(&DVector::from_vec(d));
    let gm = &dm * gm * &dm;
    let ga = &dm * ga * &dm;
    let eig = SymmetricEigen::new(gm);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * top)
        .collect();
    if keep.len() < nb {
        return None;
    }
    let mut q = DMatrix::zeros(s.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        q.set_column(c, &(eig.eigenvectors.column(i) * scale));
    }
    let red = q.transpose() * ga * &q;
    let red = (&red + red.transpose()) * 0.5;
    let e = SymmetricEigen::new(red);
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals: Vec<f64> = order[..nb].iter().map(|&i| e.eigenvalues[i]).collect();
    let mut y = DMatrix::zeros(keep.len(), nb);
    for (c, &i) in order[..nb].iter().enumerate() {
        y.set_column(c, &e.eigenvectors.column(i));
    }
    Some((vals, dm * q * y))
}

/// Smallest `k` eigenpairs of `(A + B + C) x = lambda M x`. The constant
/// eigenvector is deflated explicitly and reported as `lambda_0 = 0`.
pub fn lobpcg(op: &OperatorPair, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let start = Instant::now();
    let n = op.dim();
    if k < 2 {
        return Err(SieveError::Eigen(format!("need k >= 2, got {k}")));
    }
    let want = k - 1;
    let nb = want + opts.guard;
    if 3 * nb + 1 > n {
        return Err(SieveError::Eigen(format!("block of {nb} too large for dimension {n}")));
    }
    let ones = vec![1.0; n];
    let ones_m = op.apply_mass(&ones);
    let vol: f64 = ones_m.iter().sum();
    let mdiag = op.mass.diagonal();
    let jacobi: Vec<f64> = op.form_diagonal().iter().zip(&mdiag).map(|(a, m)| a + m).collect();
    let ops = Ops {
        op,
        ones_m,
        vol,
        mdiag,
        jacobi,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, nb, |_, _| rng.random::<f64>() - 0.5);
    ops.deflate(&mut x);
    let (mut ax, mut mx) = (ops.a(&x), ops.m(&x));
    let (mut theta, c) = rayleigh_ritz(&x, &ax, &mx, nb)
        .ok_or_else(|| SieveError::Eigen("random start block is rank deficient".into()))?;
    x = &x * &c;
    ax = &ax * &c;
    mx = &mx * &c;

    let mut p: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = None;
    let mut res = vec![f64::INFINITY; nb];
    let mut it = 0;
    let mut restarted = false;
    loop {
        let mut r = ax.clone();
        for j in 0..nb {
            let t = theta[j];
            let mut rc = r.column_mut(j);
            rc.axpy(-t, &mx.column(j), 1.0);
        }
        let scale = theta.iter().fold(1.0f64, |a, t| a.max(t.abs()));
        let norms = ops.dual_norms(&r);
        res = norms.iter().map(|v| v / scale).collect();
        if res[..want].iter().all(|&v| v <= opts.tol) {
            break;
        }
        if it >= opts.max_iter {
            let stats = SolveStats {
                iterations: it,
                residual: res[..want].iter().copied().fold(0.0, f64::max),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            return Err(SieveError::Eigen(format!(
                "LOBPCG stopped after {} iterations with residual {:e}",
                stats.iterations, stats.residual
            )));
        }
        it += 1;

        // soft locking: converged columns stop contributing search directions
        let active: Vec<usize> = (0..nb).filter(|&j| res[j] > opts.tol).collect();
        let r_act = r.select_columns(&active);
        let mut w = ops.precondition(&r_act, opts.preconditioner);
        ops.deflate(&mut w);
        let (aw, mw) = (ops.a(&w), ops.m(&w));

        let mut blocks_s = vec![x.clone(), w.clone()];
        let mut blocks_a = vec![ax.clone(), aw.clone()];
        let mut blocks_m = vec![mx.clone(), mw.clone()];
        if let Some((pp, ap, mp)) = &p {
            blocks_s.push(pp.clone());
            blocks_a.push(ap.clone());
            blocks_m.push(mp.clone());
        }
        let hcat = |bs: &[DMatrix<f64>]| {
            let total: usize = bs.iter().map(|b| b.ncols()).sum();
            let mut out = DMatrix::zeros(n, total);
            let mut c0 = 0;
            for b in bs {
                out.view_mut((0, c0), (n, b.ncols())).copy_from(b);
                c0 += b.ncols();
            }
            out
        };
        let s = hcat(&blocks_s);
        let as_ = hcat(&blocks_a);
        let ms = hcat(&blocks_m);
        let rr = rayleigh_ritz(&s, &as_, &ms, nb);
        let (vals, coef) = match rr {
            Some(v) => {
                restarted = false;
                v
            }
            None if p.is_some() && !restarted => {
                restarted = true;
                p = None;
                continue;
            }
            None => return Err(SieveError::Eigen("search space collapsed after a restart".into())),
        };
        theta = vals;
        x = &s * &coef;
        ax = &as_ * &coef;
        mx = &ms * &coef;
        // P: the part of the update outside span(X)
        let mut cp = coef.clone();
        cp.rows_mut(0, nb).fill(0.0);
        p = Some((&s * &cp, &as_ * &cp, &ms * &cp));
    }

    // M-normalise and assemble the result
    let mut values = vec![0.0];
    let mut vectors = vec![ones.iter().map(|v| v / vol.sqrt()).collect::<Vec<f64>>()];
    for j in 0..want {
        let c: Vec<f64> = x.column(j).iter().copied().collect();
        let norm: f64 = c
            .iter()
            .zip(mx.column(j).iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .sqrt();
        values.push(theta[j]);
        vectors.push(c.iter().map(|v| v / norm).collect());
    }
    let stats = SolveStats {
        iterations: it,
        residual: res[..want].iter().copied().fold(0.0, f64::max),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(EigenResult {
        values,
        vectors,
        residuals: res[..want].to_vec(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_p1;
    use crate::geometry::LimitDomain;
    use crate::mesh::{mesh_limit_domain, Grading};

    #[test]
    fn matches_dense_eigenvalues() {
        let dom = LimitDomain::unit_square();
        let lm = mesh_limit_domain(&dom, 0.125, &Grading::none(), 15.0).unwrap();
        let op = assemble_p1(&lm.mesh).unwrap();
        // dense generalised problem through the Cholesky factor of M
        let m = op.mass.to_dense();
        let l = m.clone().cholesky().unwrap();
        let linv = l.l().try_inverse().unwrap();
        let c = &linv * op.stiffness.to_dense() * linv.transpose();
        let mut dense: Vec<f64> = SymmetricEigen::new((&c + c.transpose()) * 0.5)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        dense.sort_by(f64::total_cmp);
        for pre in [Preconditioner::Jacobi, Preconditioner::InnerCg { iterations: 8 }] {
            let opts = EigenOptions {
                preconditioner: pre,
                ..EigenOptions::default()
            };
            let res = lobpcg(&op, 5, &opts).unwrap();
            for j in 0..5 {
                assert!(
                    (res.values[j] - dense[j]).abs() < 1e-9 * dense[j].max(1.0),
                    "{j}: {} vs {}",
                    res.values[j],
                    dense[j]
                );
            }
        }
    }
}
