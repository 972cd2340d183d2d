use std::collections::BTreeMap;
use std::io::Write;

use super::{LimitMesh, TriMesh};
use crate::error::{Result, SieveError};
use crate::geometry::{Side, SievePlan};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlueOptions {
    /// Largest admissible passage height / width.
    pub max_aspect: f64,
    /// Passage rows are spaced at most `row_ratio` times the column spacing.
    pub row_ratio: f64,
    /// Fewest mesh edges across a hole.
    pub min_face_edges: usize,
    pub min_angle_deg: f64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        Self {
            max_aspect: 1000.0,
            row_ratio: 3.5,
            min_face_edges: 4,
            min_angle_deg: 15.0,
        }
    }
}

/// One passage rectangle in face-local coordinates `xi in [-r, r]`,
/// `eta in [-h/2, h/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PassageMesh {
    pub passage: usize,
    pub mesh: TriMesh,
    /// Local vertex to global DOF.
    pub dofs: Vec<usize>,
    /// `(local vertex, limit vertex)` pairs on the face `eta = h/2`, glued to hole `a`.
    pub top: Vec<(usize, usize)>,
    /// Pairs on the face `eta = -h/2`, glued to hole `b`.
    pub bottom: Vec<(usize, usize)>,
    pub top_center: f64,
    pub bottom_center: f64,
    pub height: f64,
}

/// Bulk mesh plus passages. Global DOFs `0..limit_dofs` are the limit mesh
/// vertices, so restricting to them drops exactly the passage interiors.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedMesh {
    pub limit: LimitMesh,
    pub passages: Vec<PassageMesh>,
    pub limit_dofs: usize,
    pub dof_count: usize,
}

impl GluedMesh {
    fn tol(&self) -> f64 {
        1e-12 * self.limit.domain.edge
    }

    /// Re-checks that every identified pair coincides under the hole
    /// congruence.
    pub fn validate_identifications(&self) -> Result<()> {
        let tol = self.tol();
        let lv = &self.limit.mesh.vertices;
        for pm in &self.passages {
            for (pairs, center, eta) in [
                (&pm.top, pm.top_center, 0.5 * pm.height),
                (&pm.bottom, pm.bottom_center, -0.5 * pm.height),
            ] {
                for &(local, global) in pairs {
                    let p = pm.mesh.vertices[local];
                    let q = lv[global];
                    if (q[0] - center - p[0]).abs() > tol || (p[1] - eta).abs() > tol || q[1].abs() > tol {
                        return Err(SieveError::Mesh(format!(
                            "passage {} node {local} at {p:?} does not match limit node {global} at {q:?}",
                            pm.passage
                        )));
                    }
                    if pm.dofs[local] != global {
                        return Err(SieveError::Mesh(format!(
                            "passage {} node {local} maps to DOF {} instead of {global}",
                            pm.passage, pm.dofs[local]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sum of all triangle areas: bulk plus passages.
    pub fn total_area(&self) -> f64 {
        self.limit.mesh.total_area() + self.passages.iter().map(|p| p.mesh.total_area()).sum::<f64>()
    }

    /// Number of component-local nodes before identification.
    pub fn raw_node_count(&self) -> usize {
        self.limit.vertex_count() + self.passages.iter().map(|p| p.mesh.vertices.len()).sum::<usize>()
    }

    pub fn identified_count(&self) -> usize {
        self.passages.iter().map(|p| p.top.len() + p.bottom.len()).sum()
    }

    /// Global DOFs in the interior of passages (the ones `J` drops).
    pub fn passage_dofs(&self) -> std::ops::Range<usize> {
        self.limit_dofs..self.dof_count
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bulk")?;
        self.limit.mesh.write_text(&mut w)?;
        for pm in &self.passages {
            writeln!(w, "# passage {} height {:.17e}", pm.passage, pm.height)?;
            pm.mesh.write_text(&mut w)?;
            writeln!(w, "dofs {}", pm.dofs.len())?;
            for d in &pm.dofs {
                writeln!(w, "{d}")?;
            }
        }
        Ok(())
    }
}

/// Hole `index` resolved on the limit mesh trace: offsets `x - centre` of the
/// covered trace nodes, and the nodes themselves.
fn hole_nodes(lmesh: &LimitMesh, plan: &SievePlan, index: usize, min_edges: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let hole = &plan.holes[index];
    let tol = 1e-12 * plan.domain.edge;
    let trace = match hole.side {
        Side::Plus => &lmesh.trace_plus,
        Side::Minus => &lmesh.trace_minus,
    };
    let (c, r) = (hole.center[0], hole.radius);
    let ks: Vec<usize> = (0..lmesh.gamma_x.len())
        .filter(|&k| (lmesh.gamma_x[k] - c).abs() <= r + tol)
        .collect();
    let ok_ends = ks.len() >= 2
        && (lmesh.gamma_x[ks[0]] - (c - r)).abs() <= tol
        && (lmesh.gamma_x[*ks.last().unwrap()] - (c + r)).abs() <= tol;
    if !ok_ends {
        return Err(SieveError::Mesh(format!(
            "hole {index} endpoints {:.6e}..{:.6e} are not mesh nodes; refine toward the holes or use the reduced model",
            c - r,
            c + r
        )));
    }
    if ks.len() - 1 < min_edges {
        return Err(SieveError::Mesh(format!(
            "hole {index} is covered by {} edges, need {min_edges}; use the reduced model",
            ks.len() - 1
        )));
    }
    Ok((
        ks.iter().map(|&k| lmesh.gamma_x[k] - c).collect(),
        ks.iter().map(|&k| trace[k]).collect(),
    ))
}

/// Glues one structured rectangle per passage onto the holes of `lmesh`.
pub fn mesh_sieve(plan: &SievePlan, lmesh: &LimitMesh, opts: &GlueOptions) -> Result<GluedMesh> {
    if plan.n() != 2 {
        return Err(SieveError::Mesh("full sieve meshing supports n = 2 only".into()));
    }
    if plan.domain != lmesh.domain {
        return Err(SieveError::Mesh("plan and limit mesh live on different domains".into()));
    }
    let tol = 1e-12 * plan.domain.edge;
    let limit_dofs = lmesh.vertex_count();
    let mut next = limit_dofs;
    let mut passages = Vec::with_capacity(plan.passages.len());
    for (pi, p) in plan.passages.iter().enumerate() {
        let (xi_top, top_nodes) = hole_nodes(lmesh, plan, p.a, opts.min_face_edges)?;
        let (xi_bot, bot_nodes) = hole_nodes(lmesh, plan, p.b, opts.min_face_edges)?;
        if xi_top.len() != xi_bot.len() || xi_top.iter().zip(&xi_bot).any(|(a, b)| (a - b).abs() > tol) {
            return Err(SieveError::Mesh(format!(
                "passage {pi}: the two hole faces are meshed differently"
            )));
        }
        let width = xi_top.last().unwrap() - xi_top[0];
        if p.height / width > opts.max_aspect {
            return Err(SieveError::Mesh(format!(
                "passage {pi} aspect ratio {:.1} exceeds {}; use the reduced model",
                p.height / width,
                opts.max_aspect
            )));
        }
        let dx: Vec<f64> = xi_top.windows(2).map(|w| w[1] - w[0]).collect();
        let dx_min = dx.iter().copied().fold(f64::INFINITY, f64::min);
        let dx_max = dx.iter().copied().fold(0.0, f64::max);
        let rows = (p.height / (opts.row_ratio * dx_min)).ceil().max(1.0) as usize;
        let dy = p.height / rows as f64;
        if dy * opts.row_ratio < dx_max {
            return Err(SieveError::Mesh(format!(
                "passage {pi} is too short for its face resolution; use the reduced model"
            )));
        }
        let cols = xi_top.len();
        let mut mesh = TriMesh::default();
        let mut dofs = Vec::with_capacity(cols * (rows + 1));
        for row in 0..=rows {
            let eta = if row == rows {
                0.5 * p.height
            } else {
                -0.5 * p.height + row as f64 * dy
            };
            for (k, &xi) in xi_top.iter().enumerate() {
                mesh.vertices.push([xi, eta]);
                dofs.push(if row == 0 {
                    bot_nodes[k]
                } else if row == rows {
                    top_nodes[k]
                } else {
                    next += 1;
                    next - 1
                });
            }
        }
        let v = |k: usize, row: usize| row * cols + k;
        for row in 0..rows {
            for k in 0..cols - 1 {
                let (a, b, c, d) = (v(k, row), v(k + 1, row), v(k + 1, row + 1), v(k, row + 1));
                mesh.triangles.push([a, b, c]);
                mesh.triangles.push([a, c, d]);
            }
        }
        let mut groups = BTreeMap::new();
        groups.insert(
            "top".to_string(),
            (0..cols - 1).map(|k| [v(k, rows), v(k + 1, rows)]).collect(),
        );
        groups.insert(
            "bottom".to_string(),
            (0..cols - 1).map(|k| [v(k, 0), v(k + 1, 0)]).collect(),
        );
        groups.insert(
            "wall".to_string(),
            (0..rows)
                .flat_map(|r| [[v(0, r), v(0, r + 1)], [v(cols - 1, r), v(cols - 1, r + 1)]])
                .collect(),
        );
        mesh.groups = groups;
        mesh.check_quality(opts.min_angle_deg)?;
        passages.push(PassageMesh {
            passage: pi,
            top: (0..cols).map(|k| (v(k, rows), top_nodes[k])).collect(),
            bottom: (0..cols).map(|k| (v(k, 0), bot_nodes[k])).collect(),
            mesh,
            dofs,
            top_center: plan.holes[p.a].center[0],
            bottom_center: plan.holes[p.b].center[0],
            height: p.height,
        });
    }
    let glued = GluedMesh {
        limit: lmesh.clone(),
        passages,
        limit_dofs,
        dof_count: next,
    };
    glued.validate_identifications()?;
    Ok(glued)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sieve_plan, DLaw, LimitDomain};
    use crate::kernel::InterfaceKernel;
    use crate::mesh::{mesh_limit_domain, Grading};

    fn quarter() -> (SievePlan, LimitMesh) {
        let dom = LimitDomain::unit_square();
        let k = InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap();
        let plan = build_sieve_plan(&dom, 0.25, DLaw::cubic(), &k).unwrap();
        let lm = mesh_limit_domain(&dom, 1.0 / 32.0, &Grading::for_plan(&plan, 4, 3), 15.0).unwrap();
        (plan, lm)
    }

    #[test]
    fn dof_accounting_and_area() {
        let (plan, lm) = quarter();
        let g = mesh_sieve(&plan, &lm, &GlueOptions::default()).unwrap();
        assert_eq!(g.passages.len(), 9);
        assert_eq!(g.dof_count, g.raw_node_count() - g.identified_count());
        let expected = 1.0 + plan.passage_volume();
        assert!((g.total_area() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn injected_mismatch_is_rejected() {
        let (plan, lm) = quarter();
        let mut g = mesh_sieve(&plan, &lm, &GlueOptions::default()).unwrap();
        let (local, _) = g.passages[0].top[1];
        g.passages[0].mesh.vertices[local][0] += 1e-6;
        assert!(g.validate_identifications().is_err());
    }

    #[test]
    fn unresolved_holes_are_rejected() {
        let (plan, _) = quarter();
        let coarse = mesh_limit_domain(&plan.domain, 1.0 / 16.0, &Grading::none(), 15.0).unwrap();
        assert!(mesh_sieve(&plan, &coarse, &GlueOptions::default()).is_err());
    }

    #[test]
    fn zero_passages_keep_limit_dofs() {
        let (plan, lm) = quarter();
        let g = mesh_sieve(&plan.without_passages(), &lm, &GlueOptions::default()).unwrap();
        assert_eq!(g.dof_count, lm.vertex_count());
    }
}
