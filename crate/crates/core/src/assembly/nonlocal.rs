use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, SieveError};
use crate::geometry::Topology;
use crate::kernel::{GammaQuadrature, InterfaceKernel};
use crate::mesh::LimitMesh;
use crate::sparse::{SparseSym, TripletBuilder};

/// Gauss points per trace segment.
const ORDER: usize = 2;

/// Dense non-local part of the limit form on the trace nodes.
///
/// With `W` the kappa-weighted trace mass (`kappa(x) = int K(x, y) dy`) and
/// `G` the discretised kernel, the block is `[[W, -G], [-G, W]]` over
/// `plus ++ minus` in the interface topology and `2 (W - G)` over the single
/// trace in the boundary topology.
#[derive(Clone, Debug)]
pub struct NonlocalBlock {
    pub plus: Vec<usize>,
    /// Empty in the boundary topology.
    pub minus: Vec<usize>,
    pub weighted_mass: SparseSym,
    pub cross: DMatrix<f64>,
    robin: bool,
}

impl NonlocalBlock {
    pub fn is_robin(&self) -> bool {
        self.robin
    }

    /// Global DOFs of the block rows.
    pub fn dofs(&self) -> Vec<usize> {
        self.plus.iter().chain(&self.minus).copied().collect()
    }

    /// The block as a dense matrix over [`dofs`](Self::dofs).
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.plus.len();
        let w = self.weighted_mass.to_dense();
        if self.robin {
            return (w - &self.cross) * 2.0;
        }
        let mut d = DMatrix::zeros(2 * m, 2 * m);
        d.view_mut((0, 0), (m, m)).copy_from(&w);
        d.view_mut((m, m), (m, m)).copy_from(&w);
        d.view_mut((0, m), (m, m)).copy_from(&(-&self.cross));
        d.view_mut((m, 0), (m, m)).copy_from(&(-&self.cross));
        d
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let zero = SparseSym::zeros(self.plus.len());
        Ok(Self {
            weighted_mass: self.weighted_mass.linear_combination(factor, &zero, 0.0)?,
            cross: &self.cross * factor,
            ..self.clone()
        })
    }

    /// `y += B x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        let xp: Vec<f64> = self.plus.iter().map(|&i| x[i]).collect();
        let wp = self.weighted_mass.apply(&xp);
        let xp = nalgebra::DVector::from_vec(xp);
        if self.robin {
            let g = &self.cross * &xp;
            for (k, &i) in self.plus.iter().enumerate() {
                y[i] += 2.0 * (wp[k] - g[k]);
            }
            return;
        }
        let xm: Vec<f64> = self.minus.iter().map(|&i| x[i]).collect();
        let wm = self.weighted_mass.apply(&xm);
        let gm = &self.cross * nalgebra::DVector::from_vec(xm);
        let gp = &self.cross * &xp;
        for (k, &i) in self.plus.iter().enumerate() {
            y[i] += wp[k] - gm[k];
        }
        for (k, &i) in self.minus.iter().enumerate() {
            y[i] += wm[k] - gp[k];
        }
    }

    pub fn add_diagonal(&self, d: &mut [f64]) {
        let w = self.weighted_mass.diagonal();
        let f = if self.robin { 2.0 } else { 1.0 };
        for (k, &i) in self.plus.iter().enumerate() {
            d[i] += f * (w[k] - if self.robin { self.cross[(k, k)] } else { 0.0 });
        }
        for (k, &i) in self.minus.iter().enumerate() {
            d[i] += w[k];
        }
    }
}

/// The two parts `W` and `G` of the block on the trace with nodes `xs`.
fn trace_parts(xs: &[f64], kernel: &InterfaceKernel) -> Result<(SparseSym, DMatrix<f64>)> {
    let quad = GammaQuadrature::gauss_on_segments(xs, ORDER)?;
    quad.check_covers(kernel.extent())?;
    let nq = quad.len();
    let m = xs.len();
    let w = quad.weights();
    // (segment, value of the left hat, value of the right hat) per point
    let hats: Vec<(usize, f64, f64)> = (0..nq)
        .map(|q| {
            let seg = q / ORDER;
            let x = quad.point(q)[0];
            let h = xs[seg + 1] - xs[seg];
            (seg, (xs[seg + 1] - x) / h, (x - xs[seg]) / h)
        })
        .collect();
    // T = (w K w) Phi, one row per quadrature point
    let rows: Vec<(f64, Vec<f64>)> = (0..nq)
        .into_par_iter()
        .map(|q| {
            let xq = quad.point(q);
            let mut t = vec![0.0; m];
            let mut kappa = 0.0;
            for r in 0..nq {
                let k = kernel.eval(xq, quad.point(r));
                kappa += w[r] * k;
                let (seg, l, rr) = hats[r];
                let c = w[q] * k * w[r];
                t[seg] += c * l;
                t[seg + 1] += c * rr;
            }
            (kappa, t)
        })
        .collect();

    let mut wm = TripletBuilder::with_capacity(m, 4 * nq);
    for (q, &(seg, l, r)) in hats.iter().enumerate() {
        let c = w[q] * rows[q].0;
        wm.add(seg, seg, c * l * l);
        wm.add(seg, seg + 1, c * l * r);
        wm.add(seg + 1, seg, c * l * r);
        wm.add(seg + 1, seg + 1, c * r * r);
    }

    let mut g = DMatrix::zeros(m, m);
    for (q, &(seg, l, r)) in hats.iter().enumerate() {
        for (b, &v) in rows[q].1.iter().enumerate() {
            g[(seg, b)] += l * v;
            g[(seg + 1, b)] += r * v;
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    Ok((wm.finish()?, g))
}

fn check_kernel(lmesh: &LimitMesh, kernel: &InterfaceKernel) -> Result<()> {
    if kernel.extent() != lmesh.domain.gamma_extent() {
        return Err(SieveError::Assembly(format!(
            "kernel lives on {:?}, mesh interface is {:?}",
            kernel.extent(),
            lmesh.domain.gamma_extent()
        )));
    }
    Ok(())
}

/// Non-local block coupling the two sides of the interface.
pub fn assemble_nonlocal_interface(lmesh: &LimitMesh, kernel: &InterfaceKernel) -> Result<NonlocalBlock> {
    check_kernel(lmesh, kernel)?;
    if lmesh.domain.topology != Topology::Interface {
        return Err(SieveError::Assembly(
            "interface block needs the interface topology".into(),
        ));
    }
    let (weighted_mass, cross) = trace_parts(&lmesh.gamma_x, kernel)?;
    Ok(NonlocalBlock {
        plus: lmesh.trace_plus.clone(),
        minus: lmesh.trace_minus.clone(),
        weighted_mass,
        cross,
        robin: false,
    })
}

/// Non-local Robin block `2 (W - G)`, the form `int int K (u(x) - u(y))^2`.
pub fn assemble_robin_nonlocal(lmesh: &LimitMesh, kernel: &InterfaceKernel) -> Result<NonlocalBlock> {
    check_kernel(lmesh, kernel)?;
    if lmesh.domain.topology != Topology::Boundary {
        return Err(SieveError::Assembly("Robin block needs the boundary topology".into()));
    }
    let (weighted_mass, cross) = trace_parts(&lmesh.gamma_x, kernel)?;
    Ok(NonlocalBlock {
        plus: lmesh.trace_plus.clone(),
        minus: Vec::new(),
        weighted_mass,
        cross,
        robin: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LimitDomain;
    use crate::mesh::{mesh_limit_domain, Grading};

    #[test]
    fn constant_kernel_block_is_rank_one_on_traces() {
        let dom = LimitDomain::unit_square();
        let lm = mesh_limit_domain(&dom, 0.25, &Grading::none(), 15.0).unwrap();
        let k = InterfaceKernel::constant(2.0, dom.gamma_extent()).unwrap();
        let b = assemble_nonlocal_interface(&lm, &k).unwrap();
        // u+ = 1, u- = 0 gives int int K = 2
        let mut x = vec![0.0; lm.vertex_count()];
        for &i in &b.plus {
            x[i] = 1.0;
        }
        let mut y = vec![0.0; x.len()];
        b.apply_add(&x, &mut y);
        let e: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((e - 2.0).abs() < 1e-13);
        let ones = vec![1.0; x.len()];
        let mut y = vec![0.0; x.len()];
        b.apply_add(&ones, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn diagonal_matches_dense() {
        let dom = LimitDomain::unit_square();
        let lm = mesh_limit_domain(&dom, 0.25, &Grading::none(), 15.0).unwrap();
        let k = InterfaceKernel::gaussian(1.0, 0.3, dom.gamma_extent()).unwrap();
        let b = assemble_nonlocal_interface(&lm, &k).unwrap();
        let dense = b.dense();
        let dofs = b.dofs();
        let mut d = vec![0.0; lm.vertex_count()];
        b.add_diagonal(&mut d);
        for (k, &i) in dofs.iter().enumerate() {
            assert!((d[i] - dense[(k, k)]).abs() < 1e-15);
        }
    }
}
