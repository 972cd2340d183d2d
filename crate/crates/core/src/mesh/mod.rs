//! Triangulations: the broken limit mesh with duplicated interface nodes and
//! the glued sieve mesh built from it.

mod glued;
mod quadtree;

pub use glued::{mesh_sieve, GlueOptions, GluedMesh, PassageMesh};
pub use quadtree::{mesh_limit_domain, Grading, LimitMesh};

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{Result, SieveError};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Named boundary edge sets.
    pub groups: BTreeMap<String, Vec<[usize; 2]>>,
}

impl TriMesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0f64;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let q = self.vertices[tri[(k + 1) % 3]];
                let r = self.vertices[tri[(k + 2) % 3]];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Rejects inverted or degenerate triangles and angles below `min_angle_deg`.
    pub fn check_quality(&self, min_angle_deg: f64) -> Result<()> {
        let scale = self
            .vertices
            .iter()
            .fold(0.0f64, |a, p| a.max(p[0].abs()).max(p[1].abs()))
            .max(1.0);
        for t in 0..self.triangles.len() {
            let area = self.signed_area(t);
            if !(area > 1e-300 * scale * scale) {
                return Err(SieveError::DegenerateTriangle { index: t, area });
            }
        }
        let angle = self.min_angle_deg();
        if angle < min_angle_deg {
            return Err(SieveError::Mesh(format!(
                "minimum angle {angle:.2} deg below the floor {min_angle_deg} deg"
            )));
        }
        Ok(())
    }

    /// Edges belonging to exactly one triangle, as sorted vertex pairs.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut out: Vec<[usize; 2]> = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        out.sort_unstable();
        out
    }

    /// Checks that the named groups partition the boundary edge set.
    pub fn check_groups(&self) -> Result<()> {
        let mut grouped: Vec<[usize; 2]> = self
            .groups
            .values()
            .flatten()
            .map(|e| [e[0].min(e[1]), e[0].max(e[1])])
            .collect();
        grouped.sort_unstable();
        let before = grouped.len();
        grouped.dedup();
        if grouped.len() != before {
            return Err(SieveError::Mesh("boundary groups overlap".into()));
        }
        if grouped != self.boundary_edges() {
            return Err(SieveError::Mesh(
                "boundary groups do not cover the boundary exactly".into(),
            ));
        }
        Ok(())
    }

    /// Plain text: `nv nt`, vertex lines, triangle lines, then one
    /// `group NAME COUNT` block of edge lines per group.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.vertices.len(), self.triangles.len())?;
        for p in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for (name, edges) in &self.groups {
            writeln!(w, "group {name} {}", edges.len())?;
            for e in edges {
                writeln!(w, "{} {}", e[0], e[1])?;
            }
        }
        Ok(())
    }

    pub fn read_text(text: &str) -> Result<TriMesh> {
        let bad = |m: &str| SieveError::Mesh(format!("mesh text: {m}"));
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end of input"));
        let head: Vec<usize> = next()?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("header")))
            .collect::<Result<_>>()?;
        if head.len() != 2 {
            return Err(bad("header must be `nv nt`"));
        }
        let mut mesh = TriMesh::default();
        for _ in 0..head[0] {
            let v: Vec<f64> = next()?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("vertex")))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(bad("vertex line needs two coordinates"));
            }
            mesh.vertices.push([v[0], v[1]]);
        }
        for _ in 0..head[1] {
            let t: Vec<usize> = next()?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("triangle")))
                .collect::<Result<_>>()?;
            if t.len() != 3 || t.iter().any(|&i| i >= head[0]) {
                return Err(bad("triangle line"));
            }
            mesh.triangles.push([t[0], t[1], t[2]]);
        }
        while let Ok(line) = next() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "group" {
                return Err(bad("group header"));
            }
            let count: usize = parts[2].parse().map_err(|_| bad("group count"))?;
            let mut edges = Vec::with_capacity(count);
            for _ in 0..count {
                let e: Vec<usize> = next()?
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad("edge")))
                    .collect::<Result<_>>()?;
                if e.len() != 2 {
                    return Err(bad("edge line"));
                }
                edges.push([e[0], e[1]]);
            }
            mesh.groups.insert(parts[1].to_string(), edges);
        }
        Ok(mesh)
    }
}
