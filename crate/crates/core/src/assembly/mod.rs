//! Discrete forms: P1 stiffness and mass, the dense non-local interface
//! block, and the passage couplings of the reduced sieve.

mod nonlocal;
mod sieve;

pub use nonlocal::{assemble_nonlocal_interface, assemble_robin_nonlocal, NonlocalBlock};
pub use sieve::{
    assemble_limit_operator, assemble_reduced_sieve, assemble_sieve_full, footprint_mean_weights, passage_l2_norms_sq,
    Coupling, CouplingBlock,
};

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};
use crate::mesh::TriMesh;
use crate::sparse::{SparseSym, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorTag {
    Limit,
    SieveFull,
    SieveReduced,
    RobinLimit,
    RobinSieve,
}

impl fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorTag::Limit => "limit",
            OperatorTag::SieveFull => "sieve-full",
            OperatorTag::SieveReduced => "sieve-reduced",
            OperatorTag::RobinLimit => "robin-limit",
            OperatorTag::RobinSieve => "robin-sieve",
        })
    }
}

/// Stiffness `A`, mass `M` and the optional extra form parts; the full form
/// is `A + B + C` with `B` the non-local block and `C` the passage couplings.
#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub tag: OperatorTag,
    pub stiffness: SparseSym,
    pub mass: SparseSym,
    pub nonlocal: Option<NonlocalBlock>,
    pub couplings: Option<CouplingBlock>,
}

impl OperatorPair {
    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// `y = (A + B + C) x`.
    pub fn apply_form_into(&self, x: &[f64], y: &mut [f64]) {
        self.stiffness.mul_vec(x, y);
        if let Some(b) = &self.nonlocal {
            b.apply_add(x, y);
        }
        if let Some(c) = &self.couplings {
            c.apply_add(x, y);
        }
    }

    pub fn apply_form(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_form_into(x, &mut y);
        y
    }

    pub fn apply_mass(&self, x: &[f64]) -> Vec<f64> {
        self.mass.apply(x)
    }

    /// Diagonal of `A + B + C`.
    pub fn form_diagonal(&self) -> Vec<f64> {
        let mut d = self.stiffness.diagonal();
        if let Some(b) = &self.nonlocal {
            b.add_diagonal(&mut d);
        }
        if let Some(c) = &self.couplings {
            c.add_diagonal(&mut d);
        }
        d
    }

    /// `u^T (A + B + C) u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        dot(u, &self.apply_form(u))
    }

    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u).max(0.0).sqrt()
    }

    /// `1^T M 1`.
    pub fn volume(&self) -> f64 {
        let ones = vec![1.0; self.dim()];
        self.mass.bilinear(&ones, &ones)
    }

    /// `max |(A + B + C) 1|`.
    pub fn constant_defect(&self) -> f64 {
        let ones = vec![1.0; self.dim()];
        self.apply_form(&ones).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Dense `A + B + C` (test oracles only).
    pub fn form_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_form(&e);
            for i in 0..n {
                d[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        d
    }

    /// Writes `stiffness.mtx`, `mass.mtx` and, when present, the dense
    /// non-local block as `nonlocal.txt` (first line: DOF list).
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.stiffness
            .write_matrix_market(std::io::BufWriter::new(std::fs::File::create(
                dir.join("stiffness.mtx"),
            )?))?;
        self.mass
            .write_matrix_market(std::io::BufWriter::new(std::fs::File::create(dir.join("mass.mtx"))?))?;
        if let Some(b) = &self.nonlocal {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("nonlocal.txt"))?);
            let dofs: Vec<String> = b.dofs().iter().map(|d| d.to_string()).collect();
            writeln!(w, "{}", dofs.join(" "))?;
            let dense = b.dense();
            for i in 0..dense.nrows() {
                let row: Vec<String> = (0..dense.ncols()).map(|j| format!("{:.17e}", dense[(i, j)])).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adds the P1 stiffness and consistent mass of `mesh` into the builders,
/// mapping local vertex `v` to `dofs[v]` (identity when `None`).
pub(crate) fn add_p1(
    a: &mut TripletBuilder,
    m: &mut TripletBuilder,
    mesh: &TriMesh,
    dofs: Option<&[usize]>,
) -> Result<()> {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        if !(area > 0.0) {
            return Err(SieveError::DegenerateTriangle { index: t, area });
        }
        let p = tri.map(|v| mesh.vertices[v]);
        // gradients of the barycentric coordinates, times 2 * area
        let g = [
            [p[1][1] - p[2][1], p[2][0] - p[1][0]],
            [p[2][1] - p[0][1], p[0][0] - p[2][0]],
            [p[0][1] - p[1][1], p[1][0] - p[0][0]],
        ];
        let ids = tri.map(|v| dofs.map_or(v, |d| d[v]));
        for i in 0..3 {
            for j in 0..3 {
                let k = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) / (4.0 * area);
                a.add(ids[i], ids[j], k);
                m.add(ids[i], ids[j], area / 12.0 * if i == j { 2.0 } else { 1.0 });
            }
        }
    }
    Ok(())
}

/// Standard P1 stiffness and consistent mass on `mesh` (tag `limit`).
pub fn assemble_p1(mesh: &TriMesh) -> Result<OperatorPair> {
    let n = mesh.vertices.len();
    let mut a = TripletBuilder::with_capacity(n, 9 * mesh.triangles.len());
    let mut m = TripletBuilder::with_capacity(n, 9 * mesh.triangles.len());
    add_p1(&mut a, &mut m, mesh, None)?;
    Ok(OperatorPair {
        tag: OperatorTag::Limit,
        stiffness: a.finish()?,
        mass: m.finish()?,
        nonlocal: None,
        couplings: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn right_triangle_element() {
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            groups: BTreeMap::new(),
        };
        let op = assemble_p1(&mesh).unwrap();
        for i in 0..3 {
            let s: f64 = op.stiffness.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-15);
        }
        assert_eq!(op.stiffness.get(0, 0), 1.0);
        assert!((op.volume() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_is_reported() {
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            triangles: vec![[0, 1, 2]],
            groups: BTreeMap::new(),
        };
        assert!(matches!(
            assemble_p1(&mesh),
            Err(SieveError::DegenerateTriangle { index: 0, .. })
        ));
    }
}
