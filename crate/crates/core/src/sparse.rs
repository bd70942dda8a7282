//! Compressed sparse row storage for square weighted adjacency matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Square CSR matrix. Column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col) -> value` entries. Zero values are kept as
    /// explicit entries only if present in the map.
    pub fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in entries {
            assert!(r < n && c < n, "entry ({r}, {c}) outside {n}x{n}");
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    /// Builds a symmetric matrix from upper-triangle entries (`row <= col`).
    pub fn symmetric_from_upper(n: usize, upper: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut full = BTreeMap::new();
        for (&(r, c), &v) in upper {
            debug_assert!(r <= c);
            full.insert((r, c), v);
            full.insert((c, r), v);
        }
        Self::from_entries(n, &full)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Upper triangle plus diagonal, `(row, col, value)` with `row <= col`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.iter().filter(|&(r, c, _)| r <= c)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }

    /// Returns a copy with every value passed through `f(row, col, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = f(r, self.indices[k], self.values[k]);
            }
        }
        out
    }

    /// `self · dense`.
    pub fn mul_dense(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        if dense.nrows() != self.n {
            return Err(Error::shape("sparse product", self.n, dense.nrows()));
        }
        let mut out = Array2::zeros((self.n, dense.ncols()));
        for r in 0..self.n {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &dense.row(c));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`.
    pub fn transpose_mul_dense(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        if dense.nrows() != self.n {
            return Err(Error::shape("sparse transpose product", self.n, dense.nrows()));
        }
        let mut out = Array2::zeros((self.n, dense.ncols()));
        for r in 0..self.n {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// `<i> <j> <weight>` lines over the upper triangle and diagonal.
    pub fn to_triplet_string(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.upper_entries() {
            let _ = writeln!(s, "{r} {c} {v}");
        }
        s
    }
}
