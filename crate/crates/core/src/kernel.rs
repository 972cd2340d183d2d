//! Interface kernels `K(x, y)` on the closed interface and quadrature over it.
//!
//! The interface is always an axis-aligned cube `(-L/2, L/2)^{n-1}`; points on
//! it are slices of length `n - 1`. Every kernel is checked for symmetry and
//! strict positivity on a sampling grid when it is constructed, and the
//! sampled extrema are kept as `k_min` / `k_max`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};

/// Relative slack, in units of the interface edge, for "point lies in the
/// closed interface" checks.
const CLOSURE_TOL: f64 = 1e-12;

/// The interface `(-L/2, L/2)^{dim}` as a subset of `R^{dim}`, `dim = n - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaExtent {
    pub dim: usize,
    pub edge: f64,
}

impl GammaExtent {
    pub fn new(dim: usize, edge: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(SieveError::Geometry(format!(
                "interface dimension {dim} unsupported (expected 1 or 2)"
            )));
        }
        if !(edge.is_finite() && edge > 0.0) {
            return Err(SieveError::Geometry(format!("interface edge {edge} must be positive")));
        }
        Ok(Self { dim, edge })
    }

    pub fn half(&self) -> f64 {
        0.5 * self.edge
    }

    /// `vol_{n-1}` of the interface.
    pub fn area(&self) -> f64 {
        self.edge.powi(self.dim as i32)
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        let lim = self.half() * (1.0 + CLOSURE_TOL) + CLOSURE_TOL * self.edge;
        x.len() == self.dim && x.iter().all(|c| c.abs() <= lim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-|x - y|^2 / width^2)`
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// `base + amplitude * prod_k cos(frequency pi x_k) cos(frequency pi y_k)`
    SeparableCosine {
        base: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Row-major table `values[i * n_y + j] = T(x_i, y_j)` on a uniform grid
    /// over the closed interface (one-dimensional interfaces only).
    Tabulated {
        n_x: usize,
        n_y: usize,
        values: Vec<f64>,
    },
}

/// A validated, immutable interface kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceKernel {
    kind: KernelKind,
    extent: GammaExtent,
    scale: f64,
    k_min: f64,
    k_max: f64,
}

impl InterfaceKernel {
    /// Grid resolution per interface axis used to estimate `k_min`/`k_max`.
    pub const SAMPLES_PER_AXIS: usize = 64;

    pub fn new(kind: KernelKind, extent: GammaExtent) -> Result<Self> {
        let kind = validate_kind(kind, &extent)?;
        let mut kernel = Self {
            kind,
            extent,
            scale: 1.0,
            k_min: f64::NAN,
            k_max: f64::NAN,
        };
        kernel.sample_bounds()?;
        Ok(kernel)
    }

    pub fn constant(value: f64, extent: GammaExtent) -> Result<Self> {
        Self::new(KernelKind::Constant { value }, extent)
    }

    pub fn gaussian(amplitude: f64, width: f64, extent: GammaExtent) -> Result<Self> {
        Self::new(KernelKind::Gaussian { amplitude, width }, extent)
    }

    pub fn separable_cosine(base: f64, amplitude: f64, frequency: f64, extent: GammaExtent) -> Result<Self> {
        Self::new(
            KernelKind::SeparableCosine {
                base,
                amplitude,
                frequency,
            },
            extent,
        )
    }

    /// Parses the plain-text table format: a header line `n_x n_y` followed by
    /// `n_x * n_y` reals in row-major order (any whitespace layout).
    pub fn parse_table(text: &str, extent: GammaExtent) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| SieveError::Kernel(format!("table: missing {what}")))?
                .parse::<usize>()
                .map_err(|e| SieveError::Kernel(format!("table: bad {what}: {e}")))
        };
        let n_x = next_usize("n_x")?;
        let n_y = next_usize("n_y")?;
        let values = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| SieveError::Kernel(format!("table: bad value {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(KernelKind::Tabulated { n_x, n_y, values }, extent)
    }

    pub fn load_table(path: &Path, extent: GammaExtent) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_table(&text, extent)
    }

    /// The same kernel multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(SieveError::Kernel(format!("scale factor {factor} must be positive")));
        }
        let mut out = self.clone();
        out.scale *= factor;
        out.k_min *= factor;
        out.k_max *= factor;
        Ok(out)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn extent(&self) -> GammaExtent {
        self.extent
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, KernelKind::Constant { .. })
    }

    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        for p in [x, y] {
            if !self.extent.contains_closed(p) {
                return Err(SieveError::PointOutsideInterface { point: p.to_vec() });
            }
        }
        Ok(self.eval(x, y))
    }

    /// Evaluation without the closure check; callers guarantee both points
    /// lie in the closed interface.
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let raw = match &self.kind {
            KernelKind::Constant { value } => *value,
            KernelKind::Gaussian { amplitude, width } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-d2 / (width * width)).exp()
            }
            KernelKind::SeparableCosine {
                base,
                amplitude,
                frequency,
            } => {
                let w = frequency * std::f64::consts::PI;
                let prod: f64 = x.iter().zip(y).map(|(a, b)| (w * a).cos() * (w * b).cos()).product();
                base + amplitude * prod
            }
            KernelKind::Tabulated { n_x, n_y, values } => bilinear(values, *n_x, *n_y, self.extent, x[0], y[0]),
        };
        self.scale * raw
    }

    fn sample_bounds(&mut self) -> Result<()> {
        let pts = sample_grid(self.extent, Self::SAMPLES_PER_AXIS);
        let dim = self.extent.dim;
        let count = pts.len() / dim;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..count {
            let x = &pts[a * dim..(a + 1) * dim];
            for b in a..count {
                let y = &pts[b * dim..(b + 1) * dim];
                let kxy = self.eval(x, y);
                let kyx = self.eval(y, x);
                if !kxy.is_finite() {
                    return Err(SieveError::Kernel(format!("non-finite value at {x:?}, {y:?}")));
                }
                if (kxy - kyx).abs() > 1e-13 * kxy.abs().max(kyx.abs()) {
                    return Err(SieveError::Kernel(format!(
                        "asymmetric: K({x:?},{y:?}) = {kxy} but K(y,x) = {kyx}"
                    )));
                }
                if kxy <= 0.0 {
                    return Err(SieveError::Kernel(format!(
                        "not strictly positive: K({x:?},{y:?}) = {kxy}"
                    )));
                }
                lo = lo.min(kxy);
                hi = hi.max(kxy);
            }
        }
        self.k_min = lo;
        self.k_max = hi;
        Ok(())
    }
}

fn validate_kind(kind: KernelKind, extent: &GammaExtent) -> Result<KernelKind> {
    let bad = |msg: String| Err(SieveError::Kernel(msg));
    match kind {
        KernelKind::Constant { value } if !(value.is_finite() && value > 0.0) => {
            bad(format!("constant kernel value {value} must be positive"))
        }
        KernelKind::Gaussian { amplitude, width }
            if !(amplitude.is_finite() && amplitude > 0.0 && width.is_finite() && width > 0.0) =>
        {
            bad(format!(
                "gaussian amplitude {amplitude} and width {width} must be positive"
            ))
        }
        KernelKind::SeparableCosine { base, amplitude, .. } if !(base > amplitude.abs()) => {
            bad(format!("separable cosine needs base {base} > |amplitude| {amplitude}"))
        }
        KernelKind::Tabulated { n_x, n_y, mut values } => {
            if extent.dim != 1 {
                return bad("tabulated kernels require a one-dimensional interface".into());
            }
            if n_x < 2 || n_y < 2 || values.len() != n_x * n_y {
                return bad(format!("table {n_x}x{n_y} with {} values", values.len()));
            }
            if n_x != n_y {
                return bad(format!("table must be square to symmetrize, got {n_x}x{n_y}"));
            }
            for i in 0..n_x {
                for j in (i + 1)..n_y {
                    let avg = 0.5 * (values[i * n_y + j] + values[j * n_y + i]);
                    values[i * n_y + j] = avg;
                    values[j * n_y + i] = avg;
                }
            }
            Ok(KernelKind::Tabulated { n_x, n_y, values })
        }
        other => Ok(other),
    }
}

fn bilinear(values: &[f64], n_x: usize, n_y: usize, extent: GammaExtent, x: f64, y: f64) -> f64 {
    let locate = |t: f64, n: usize| -> (usize, f64) {
        let s = ((t + extent.half()) / extent.edge).clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    };
    let (i, tx) = locate(x, n_x);
    let (j, ty) = locate(y, n_y);
    let v = |a: usize, b: usize| values[a * n_y + b];
    (1.0 - tx) * ((1.0 - ty) * v(i, j) + ty * v(i, j + 1)) + tx * ((1.0 - ty) * v(i + 1, j) + ty * v(i + 1, j + 1))
}

/// Uniform grid including the endpoints, flattened.
fn sample_grid(extent: GammaExtent, per_axis: usize) -> Vec<f64> {
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -extent.half() + extent.edge * i as f64 / (per_axis - 1) as f64)
        .collect();
    match extent.dim {
        1 => axis,
        _ => {
            let mut out = Vec::with_capacity(2 * per_axis * per_axis);
            for &a in &axis {
                for &b in &axis {
                    out.push(a);
                    out.push(b);
                }
            }
            out
        }
    }
}

/// Positive-weight quadrature on the interface.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaQuadrature {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GammaQuadrature {
    /// Tensor-product composite midpoint rule with `cells` cells per axis.
    pub fn midpoint(extent: GammaExtent, cells: usize) -> Self {
        let h = extent.edge / cells as f64;
        let axis: Vec<f64> = (0..cells).map(|i| -extent.half() + (i as f64 + 0.5) * h).collect();
        let (points, weights) = match extent.dim {
            1 => (axis.clone(), vec![h; cells]),
            _ => {
                let mut pts = Vec::with_capacity(2 * cells * cells);
                for &a in &axis {
                    for &b in &axis {
                        pts.push(a);
                        pts.push(b);
                    }
                }
                (pts, vec![h * h; cells * cells])
            }
        };
        Self {
            dim: extent.dim,
            points,
            weights,
        }
    }

    /// Gauss–Legendre rule of `order` points on every segment between
    /// consecutive `breaks` (one-dimensional interfaces).
    pub fn gauss_on_segments(breaks: &[f64], order: usize) -> Result<Self> {
        let (abscissae, w) = gauss_legendre(order)?;
        if breaks.len() < 2 || breaks.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(SieveError::Kernel("segment breaks must be strictly increasing".into()));
        }
        let mut points = Vec::with_capacity(order * (breaks.len() - 1));
        let mut weights = Vec::with_capacity(points.capacity());
        for seg in breaks.windows(2) {
            let (mid, half) = (0.5 * (seg[0] + seg[1]), 0.5 * (seg[1] - seg[0]));
            for (a, wa) in abscissae.iter().zip(&w) {
                points.push(mid + half * a);
                weights.push(half * wa);
            }
        }
        Ok(Self {
            dim: 1,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Checks that the rule lives on the interface of `extent` and integrates
    /// constants to its area.
    pub fn check_covers(&self, extent: GammaExtent) -> Result<()> {
        if self.is_empty() {
            return Err(SieveError::EmptyQuadrature);
        }
        if self.dim != extent.dim {
            return Err(SieveError::Kernel(format!(
                "quadrature dimension {} on a {}-dimensional interface",
                self.dim, extent.dim
            )));
        }
        for q in 0..self.len() {
            if !extent.contains_closed(self.point(q)) {
                return Err(SieveError::PointOutsideInterface {
                    point: self.point(q).to_vec(),
                });
            }
        }
        let total = self.total_weight();
        if (total - extent.area()).abs() > 1e-12 * extent.area() {
            return Err(SieveError::Kernel(format!(
                "quadrature weights sum to {total}, interface area is {}",
                extent.area()
            )));
        }
        Ok(())
    }
}

/// `kappa(x) = \int_Gamma K(x, y) ds_y` by the given rule.
pub fn row_integral(kernel: &InterfaceKernel, x: &[f64], quad: &GammaQuadrature) -> Result<f64> {
    if quad.is_empty() {
        return Err(SieveError::EmptyQuadrature);
    }
    if !kernel.extent().contains_closed(x) {
        return Err(SieveError::PointOutsideInterface { point: x.to_vec() });
    }
    Ok((0..quad.len())
        .map(|q| quad.weight(q) * kernel.eval(x, quad.point(q)))
        .sum())
}

/// Tensor-product quadrature of `\int\int K(x,y) v(x,y) ds_x ds_y`.
pub fn double_integral<F>(kernel: &InterfaceKernel, v: F, quad: &GammaQuadrature) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if quad.is_empty() {
        return Err(SieveError::EmptyQuadrature);
    }
    let mut total = 0.0;
    for a in 0..quad.len() {
        let x = quad.point(a);
        let mut row = 0.0;
        for b in 0..quad.len() {
            let y = quad.point(b);
            row += quad.weight(b) * kernel.eval(x, y) * v(x, y);
        }
        total += quad.weight(a) * row;
    }
    Ok(total)
}

pub(crate) fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (&[f64], &[f64]) = match order {
        1 => (&[0.0], &[2.0]),
        2 => {
            const A: f64 = 0.577_350_269_189_625_8;
            (&[-A, A], &[1.0, 1.0])
        }
        3 => {
            const A: f64 = 0.774_596_669_241_483_4;
            (&[-A, 0.0, A], &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            const A: f64 = 0.339_981_043_584_856_3;
            const B: f64 = 0.861_136_311_594_052_6;
            const WA: f64 = 0.652_145_154_862_546_1;
            const WB: f64 = 0.347_854_845_137_453_9;
            (&[-B, -A, A, B], &[WB, WA, WA, WB])
        }
        _ => {
            return Err(SieveError::Kernel(format!(
                "Gauss-Legendre order {order} unsupported (1..=4)"
            )))
        }
    };
    Ok((x.to_vec(), w.to_vec()))
}
