use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::TriMesh;
use crate::error::{Result, SieveError};
use crate::geometry::{LimitDomain, SievePlan, Topology};

/// Upper bound on quadtree leaves.
const MAX_LEAVES: usize = 4_000_000;

/// Local refinement toward hole footprints on `Gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grading {
    /// Intervals `[a, b]` on the interface.
    pub footprints: Vec<(f64, f64)>,
    /// Target leaf size next to the footprints (rounded down to `h0 / 2^k`).
    pub finest: f64,
    /// A leaf of size `s` is split while it is closer than `rings * s` to a
    /// footprint.
    pub rings: usize,
}

impl Grading {
    pub fn none() -> Self {
        Self {
            footprints: Vec::new(),
            finest: f64::INFINITY,
            rings: 0,
        }
    }

    /// Footprints of every hole of `plan`, resolved by `hole_edges` edges per
    /// hole diameter.
    pub fn for_plan(plan: &SievePlan, hole_edges: usize, rings: usize) -> Self {
        let footprints: Vec<(f64, f64)> = plan
            .holes
            .iter()
            .map(|h| (h.center[0] - h.radius, h.center[0] + h.radius))
            .collect();
        let r_min = plan.holes.iter().map(|h| h.radius).fold(f64::INFINITY, f64::min);
        Self {
            footprints,
            finest: 2.0 * r_min / hole_edges.max(1) as f64,
            rings,
        }
    }

    fn is_active(&self) -> bool {
        !self.footprints.is_empty() && self.finest.is_finite()
    }
}

/// Triangulation of `Omega` in which every node on `Gamma` exists twice in the
/// interface topology (a plus copy used by triangles above and a minus copy
/// used by triangles below).
#[derive(Clone, Debug, PartialEq)]
pub struct LimitMesh {
    pub domain: LimitDomain,
    pub mesh: TriMesh,
    /// Interface nodes seen from above, ordered by `x`. In the boundary
    /// topology both trace lists hold the same nodes.
    pub trace_plus: Vec<usize>,
    pub trace_minus: Vec<usize>,
    /// `x` coordinates shared by both trace lists.
    pub gamma_x: Vec<f64>,
    /// Lumped boundary mass of the trace nodes.
    pub trace_weights: Vec<f64>,
    pub h0: f64,
    /// Smallest leaf size present.
    pub finest: f64,
}

impl LimitMesh {
    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.mesh.vertices.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Nodal interpolant that distinguishes the two sides of the interface:
    /// `f(x, y, side)` with `side = +1` above, `-1` below and `0` off `Gamma`.
    pub fn interpolate_sided<F: Fn(f64, f64, i8) -> f64>(&self, f: F) -> Vec<f64> {
        let mut side = vec![0i8; self.vertex_count()];
        if self.domain.topology == Topology::Interface {
            for &v in &self.trace_plus {
                side[v] = 1;
            }
            for &v in &self.trace_minus {
                side[v] = -1;
            }
        }
        self.mesh
            .vertices
            .iter()
            .zip(&side)
            .map(|(p, &s)| f(p[0], p[1], s))
            .collect()
    }
}

type Key = (i64, i64, i8);

/// Quadtree triangulation of the two-dimensional box `dom` on a root grid of
/// spacing `h0`, refined toward `grading.footprints` and 2:1 balanced.
pub fn mesh_limit_domain(dom: &LimitDomain, h0: f64, grading: &Grading, min_angle_deg: f64) -> Result<LimitMesh> {
    dom.validate()?;
    if dom.n != 2 {
        return Err(SieveError::Mesh(format!(
            "meshing supports n = 2 only, got n = {}",
            dom.n
        )));
    }
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(SieveError::Mesh(format!("h0 = {h0} must be positive")));
    }
    let count = |len: f64, what: &str| -> Result<i64> {
        let k = (len / h0).round();
        if k < 1.0 || (k * h0 - len).abs() > 1e-9 * len {
            return Err(SieveError::Mesh(format!("{what} {len} is not a multiple of h0 = {h0}")));
        }
        Ok(k as i64)
    };
    let nx = count(dom.edge, "edge")?;
    let ny_minus = count(dom.depth_minus, "depth below Gamma")?;
    let ny_plus = match dom.topology {
        Topology::Interface => count(dom.depth_plus, "depth above Gamma")?,
        Topology::Boundary => 0,
    };

    let mut levels = 0u32;
    if grading.is_active() {
        if grading.finest < 1e-9 * dom.edge {
            return Err(SieveError::Mesh(format!(
                "refinement to {:e} is below the resolution floor {:e}",
                grading.finest,
                1e-9 * dom.edge
            )));
        }
        if grading.rings == 0 {
            return Err(SieveError::Mesh("grading needs at least one ring".into()));
        }
        while h0 / f64::powi(2.0, levels as i32) > grading.finest * (1.0 + 1e-12) {
            levels += 1;
        }
    }
    // unit = half the finest leaf, so centres, midpoints and balance probes
    // all have integer coordinates
    let finest_units: i64 = 2;
    let root: i64 = finest_units << levels;
    let unit = h0 / root as f64;
    let (width, height) = (nx * root, (ny_minus + ny_plus) * root);
    let j_gamma = ny_minus * root;
    let x_of = |i: i64| -0.5 * dom.edge + i as f64 * unit;
    let y_of = |j: i64| {
        if j == j_gamma {
            0.0
        } else {
            -dom.depth_minus + j as f64 * unit
        }
    };

    let mut feet: Vec<(f64, f64)> = grading
        .footprints
        .iter()
        .map(|&(a, b)| ((a + 0.5 * dom.edge) / unit, (b + 0.5 * dom.edge) / unit))
        .collect();
    feet.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(feet.len());
    for f in feet {
        match merged.last_mut() {
            Some(last) if f.0 <= last.1 => last.1 = last.1.max(f.1),
            _ => merged.push(f),
        }
    }
    let rings = grading.rings as f64;
    let near = |i0: i64, j0: i64, s: i64| -> bool {
        if merged.is_empty() {
            return false;
        }
        let (lo, hi) = (i0 as f64, (i0 + s) as f64);
        let dy = (j_gamma - (j0 + s)).max(j0 - j_gamma).max(0) as f64;
        let idx = merged.partition_point(|f| f.0 <= hi);
        let mut dx = f64::INFINITY;
        for k in [idx.wrapping_sub(1), idx] {
            if let Some(&(a, b)) = merged.get(k) {
                dx = dx.min((a - hi).max(lo - b).max(0.0));
            }
        }
        dx.hypot(dy) < rings * s as f64
    };

    let mut leaves: BTreeMap<(i64, i64), i64> = BTreeMap::new();
    let mut stack: Vec<(i64, i64, i64)> = Vec::new();
    for jr in 0..(ny_minus + ny_plus) {
        for ir in 0..nx {
            stack.push((ir * root, jr * root, root));
        }
    }
    while let Some((i0, j0, s)) = stack.pop() {
        if s > finest_units && near(i0, j0, s) {
            let h = s / 2;
            stack.extend([(i0, j0, h), (i0 + h, j0, h), (i0, j0 + h, h), (i0 + h, j0 + h, h)]);
        } else {
            leaves.insert((i0, j0), s);
            if leaves.len() > MAX_LEAVES {
                return Err(SieveError::Mesh(format!("refinement exceeds {MAX_LEAVES} leaves")));
            }
        }
    }
    balance(&mut leaves, root, finest_units, width, height)?;

    let corners: HashSet<(i64, i64)> = leaves
        .iter()
        .flat_map(|(&(i0, j0), &s)| [(i0, j0), (i0 + s, j0), (i0 + s, j0 + s), (i0, j0 + s)])
        .collect();
    let split = dom.topology == Topology::Interface;
    let mut keyed: Vec<[Key; 3]> = Vec::with_capacity(2 * leaves.len());
    for (&(i0, j0), &s) in &leaves {
        let side: i8 = if !split {
            0
        } else if j0 >= j_gamma {
            1
        } else {
            -1
        };
        let key = |i: i64, j: i64| -> Key { (j, i, if j == j_gamma { side } else { 0 }) };
        let h = s / 2;
        let ring = [
            (i0, j0),
            (i0 + h, j0),
            (i0 + s, j0),
            (i0 + s, j0 + h),
            (i0 + s, j0 + s),
            (i0 + h, j0 + s),
            (i0, j0 + s),
            (i0, j0 + h),
        ];
        let poly: Vec<(i64, i64)> = ring
            .iter()
            .enumerate()
            .filter(|(k, p)| k % 2 == 0 || corners.contains(p))
            .map(|(_, &p)| p)
            .collect();
        if poly.len() == 4 {
            let [a, b, c, d] = [poly[0], poly[1], poly[2], poly[3]];
            keyed.push([key(a.0, a.1), key(b.0, b.1), key(c.0, c.1)]);
            keyed.push([key(a.0, a.1), key(c.0, c.1), key(d.0, d.1)]);
        } else {
            let centre = key(i0 + h, j0 + h);
            for k in 0..poly.len() {
                let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
                keyed.push([centre, key(p.0, p.1), key(q.0, q.1)]);
            }
        }
    }

    let keys: BTreeSet<Key> = keyed.iter().flatten().copied().collect();
    let index: BTreeMap<Key, usize> = keys.iter().enumerate().map(|(k, &key)| (key, k)).collect();
    let vertices: Vec<[f64; 2]> = keys.iter().map(|&(j, i, _)| [x_of(i), y_of(j)]).collect();
    let triangles: Vec<[usize; 3]> = keyed
        .iter()
        .map(|t| [index[&t[0]], index[&t[1]], index[&t[2]]])
        .collect();
    let mut mesh = TriMesh {
        vertices,
        triangles,
        groups: BTreeMap::new(),
    };

    let key_of: Vec<Key> = keys.iter().copied().collect();
    let on_gamma = |v: usize| key_of[v].0 == j_gamma;
    let mut groups: BTreeMap<String, Vec<[usize; 2]>> = BTreeMap::new();
    for e in mesh.boundary_edges() {
        let name = if on_gamma(e[0]) && on_gamma(e[1]) {
            match key_of[e[0]].2 {
                1 => "gamma_plus",
                -1 => "gamma_minus",
                _ => "gamma",
            }
        } else {
            "outer"
        };
        groups.entry(name.to_string()).or_default().push(e);
    }
    mesh.groups = groups;

    let trace = |side: i8| -> Vec<usize> {
        let mut v: Vec<usize> = (0..key_of.len())
            .filter(|&k| key_of[k].0 == j_gamma && key_of[k].2 == side)
            .collect();
        v.sort_by_key(|&k| key_of[k].1);
        v
    };
    let (trace_plus, trace_minus) = if split {
        (trace(1), trace(-1))
    } else {
        let t = trace(0);
        (t.clone(), t)
    };
    if trace_plus.len() != trace_minus.len()
        || trace_plus
            .iter()
            .zip(&trace_minus)
            .any(|(&a, &b)| key_of[a].1 != key_of[b].1)
    {
        return Err(SieveError::Mesh("interface traces do not match".into()));
    }
    let gamma_x: Vec<f64> = trace_plus.iter().map(|&v| mesh.vertices[v][0]).collect();
    let m = gamma_x.len();
    let trace_weights: Vec<f64> = (0..m)
        .map(|k| {
            let left = if k > 0 { gamma_x[k] - gamma_x[k - 1] } else { 0.0 };
            let right = if k + 1 < m { gamma_x[k + 1] - gamma_x[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();

    mesh.check_quality(min_angle_deg)?;
    let finest = leaves.values().copied().min().unwrap_or(root) as f64 * unit;
    Ok(LimitMesh {
        domain: *dom,
        mesh,
        trace_plus,
        trace_minus,
        gamma_x,
        trace_weights,
        h0,
        finest,
    })
}

/// Splits leaves until edge neighbours differ by at most a factor of two.
fn balance(leaves: &mut BTreeMap<(i64, i64), i64>, root: i64, finest: i64, width: i64, height: i64) -> Result<()> {
    let locate = |leaves: &BTreeMap<(i64, i64), i64>, x: i64, y: i64| -> Option<i64> {
        if x < 0 || y < 0 || x >= width || y >= height {
            return None;
        }
        let mut s = root;
        while s >= finest {
            let o = (x - x.rem_euclid(s), y - y.rem_euclid(s));
            if leaves.get(&o) == Some(&s) {
                return Some(s);
            }
            s /= 2;
        }
        None
    };
    loop {
        let mut split = Vec::new();
        for (&(i0, j0), &s) in leaves.iter() {
            if s < 4 * finest {
                continue;
            }
            let probes = (0..4).flat_map(|k| {
                let off = (2 * k + 1) * s / 8;
                [
                    (i0 - 1, j0 + off),
                    (i0 + s, j0 + off),
                    (i0 + off, j0 - 1),
                    (i0 + off, j0 + s),
                ]
            });
            for (x, y) in probes {
                if let Some(ns) = locate(leaves, x, y) {
                    if ns < s / 2 {
                        split.push((i0, j0, s));
                        break;
                    }
                }
            }
        }
        if split.is_empty() {
            return Ok(());
        }
        for (i0, j0, s) in split {
            leaves.remove(&(i0, j0));
            let h = s / 2;
            for o in [(i0, j0), (i0 + h, j0), (i0, j0 + h), (i0 + h, j0 + h)] {
                leaves.insert(o, h);
            }
        }
        if leaves.len() > MAX_LEAVES {
            return Err(SieveError::Mesh(format!("balancing exceeds {MAX_LEAVES} leaves")));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_unit_square() {
        let m = mesh_limit_domain(&LimitDomain::unit_square(), 0.25, &Grading::none(), 15.0).unwrap();
        assert_eq!(m.mesh.triangles.len(), 32);
        assert_eq!(m.trace_plus.len(), 5);
        assert_eq!(m.trace_minus.len(), 5);
        assert_eq!(m.vertex_count(), 25 + 5);
        assert!(m.trace_plus.iter().all(|v| !m.trace_minus.contains(v)));
        assert!((m.mesh.total_area() - 1.0).abs() < 1e-14);
        m.mesh.check_groups().unwrap();
        assert_eq!(m.mesh.groups["gamma_plus"].len(), 4);
        assert_eq!(m.mesh.groups["gamma_minus"].len(), 4);
    }

    #[test]
    fn halving_h0_quadruples_triangles() {
        let d = LimitDomain::unit_square();
        let a = mesh_limit_domain(&d, 0.25, &Grading::none(), 15.0).unwrap();
        let b = mesh_limit_domain(&d, 0.125, &Grading::none(), 15.0).unwrap();
        assert_eq!(4 * a.mesh.triangles.len(), b.mesh.triangles.len());
    }

    #[test]
    fn no_triangle_spans_gamma() {
        let d = LimitDomain::unit_square();
        let g = Grading {
            footprints: vec![(-0.01, 0.01)],
            finest: 1.0 / 256.0,
            rings: 3,
        };
        let m = mesh_limit_domain(&d, 0.125, &g, 15.0).unwrap();
        for tri in &m.mesh.triangles {
            let ys: Vec<f64> = tri.iter().map(|&v| m.mesh.vertices[v][1]).collect();
            assert!(ys.iter().all(|&y| y >= 0.0) || ys.iter().all(|&y| y <= 0.0));
            let plus = tri.iter().any(|v| m.trace_plus.contains(v));
            let minus = tri.iter().any(|v| m.trace_minus.contains(v));
            assert!(!(plus && minus));
        }
        assert!((m.mesh.total_area() - 1.0).abs() < 1e-12);
        assert!(m.mesh.min_angle_deg() >= 45.0 - 1e-9);
        assert!((m.finest - 1.0 / 256.0).abs() < 1e-15);
        m.mesh.check_groups().unwrap();
    }

    #[test]
    fn boundary_topology_has_single_trace() {
        let d = LimitDomain::boundary(2, 1.0, 0.5).unwrap();
        let m = mesh_limit_domain(&d, 0.25, &Grading::none(), 15.0).unwrap();
        assert_eq!(m.trace_plus, m.trace_minus);
        assert_eq!(m.vertex_count(), 15);
        assert!((m.mesh.total_area() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn bad_inputs() {
        let d = LimitDomain::unit_square();
        assert!(mesh_limit_domain(&d, 0.3, &Grading::none(), 15.0).is_err());
        let g = Grading {
            footprints: vec![(0.0, 1e-12)],
            finest: 1e-12,
            rings: 3,
        };
        assert!(mesh_limit_domain(&d, 0.25, &g, 15.0).is_err());
    }
}
