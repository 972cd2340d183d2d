//! Compressed-row storage for symmetric matrices (both triangles stored).

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Result, SieveError};

/// Rows below this size are applied serially.
const PAR_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on [`finish`](Self::finish).
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    /// Sorts, merges duplicates and checks symmetry to `1e-13` relative to the
    /// largest entry.
    pub fn finish(mut self) -> Result<SparseSym> {
        self.entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().expect("merged entry") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let m = SparseSym {
            n: self.n,
            row_ptr,
            cols,
            vals,
        };
        let scale = m.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let asym = m.max_asymmetry();
        if asym > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(SieveError::Assembly(format!(
                "assembled matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
            )));
        }
        Ok(m)
    }
}

impl SparseSym {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Symmetric Gauss-Seidel preconditioner: `z = (D + L)^{-1} D (D + U)^{-1} r`
    /// where `diag` replaces the stored diagonal (it may carry extra terms).
    pub fn symmetric_gauss_seidel(&self, diag: &[f64], r: &[f64], z: &mut [f64]) {
        for i in 0..self.n {
            let mut s = r[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if j >= i {
                    break;
                }
                s -= self.vals[k] * z[j];
            }
            z[i] = s / diag[i];
        }
        for i in (0..self.n).rev() {
            let mut s = 0.0;
            for k in (self.row_ptr[i]..self.row_ptr[i + 1]).rev() {
                let j = self.cols[k];
                if j <= i {
                    break;
                }
                s += self.vals[k] * z[j];
            }
            z[i] -= s / diag[i];
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row = |i: usize| -> f64 {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            s
        };
        if self.n < PAR_ROWS {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        } else {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }

    /// `y += alpha A x`.
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row = |i: usize| -> f64 {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            s
        };
        if self.n < PAR_ROWS {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += alpha * row(i);
            }
        } else {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi += alpha * row(i));
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j > i {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    /// `alpha A + beta B` on the union pattern.
    pub fn linear_combination(&self, alpha: f64, other: &SparseSym, beta: f64) -> Result<SparseSym> {
        if self.n != other.n {
            return Err(SieveError::Assembly(format!(
                "dimension mismatch {} vs {}",
                self.n, other.n
            )));
        }
        if self.row_ptr == other.row_ptr && self.cols == other.cols {
            let vals = self
                .vals
                .iter()
                .zip(&other.vals)
                .map(|(a, b)| alpha * a + beta * b)
                .collect();
            return Ok(SparseSym {
                n: self.n,
                row_ptr: self.row_ptr.clone(),
                cols: self.cols.clone(),
                vals,
            });
        }
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + other.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.add(i, j, alpha * v);
            }
            for (j, v) in other.row(i) {
                b.add(i, j, beta * v);
            }
        }
        b.finish()
    }

    /// Dense copy (test oracles and tiny problems only).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Matrix Market `coordinate real symmetric`, lower triangle, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let lower: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| (i, j, v)))
            .collect();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, lower.len())?;
        for (i, j, v) in lower {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    pub fn read_matrix_market(text: &str) -> Result<SparseSym> {
        let bad = |m: String| SieveError::Assembly(format!("matrix market: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        if !header.starts_with("%%MatrixMarket matrix coordinate real symmetric") {
            return Err(bad(format!("unsupported header {header:?}")));
        }
        let mut lines = lines.filter(|l| !l.starts_with('%'));
        let size = lines.next().ok_or_else(|| bad("missing size line".into()))?;
        let dims: Vec<usize> = size
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| bad(format!("size line: {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != dims[1] {
            return Err(bad(format!("bad size line {size:?}")));
        }
        let mut b = TripletBuilder::with_capacity(dims[0], 2 * dims[2]);
        let mut count = 0;
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad(format!("bad entry {line:?}")));
            }
            let i: usize = t[0].parse().map_err(|e| bad(format!("{e}")))?;
            let j: usize = t[1].parse().map_err(|e| bad(format!("{e}")))?;
            let v: f64 = t[2].parse().map_err(|e| bad(format!("{e}")))?;
            if i == 0 || j == 0 || i > dims[0] || j > i {
                return Err(bad(format!("entry ({i},{j}) outside the lower triangle")));
            }
            b.add(i - 1, j - 1, v);
            if i != j {
                b.add(j - 1, i - 1, v);
            }
            count += 1;
        }
        if count != dims[2] {
            return Err(bad(format!("expected {} entries, found {count}", dims[2])));
        }
        b.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseSym {
        let mut b = TripletBuilder::new(3);
        for (i, j, v) in [
            (0, 0, 2.0),
            (1, 1, 2.0),
            (2, 2, 2.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
        ] {
            b.add(i, j, v);
        }
        b.add(0, 0, 1.0);
        b.finish().unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]), vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 1, 1.0);
        assert!(b.finish().is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = small();
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let back = SparseSym::read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(a, back);
    }
}
