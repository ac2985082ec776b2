//! CSR storage for sparse symmetric matrices, counted matrix-vector
//! products, and deterministic test-matrix generators.
//!
//! Both triangles are stored explicitly so the row traversal in `spmv`
//! is unconditional; memory is not a constraint at the problem sizes
//! this crate targets.

use crate::error::Error;
use crate::Result;
use std::collections::BTreeMap;

pub type Vector = Vec<f64>;

/// Counts operator applications during a solve. `matvec_count` tracks
/// applications of the system matrix `A`; `precond_count` tracks
/// preconditioner applications. Applications of a pencil's `B` matrix go
/// through the uncounted [`SparseSymMatrix::mul_into`] path, matching the
/// convention that "MV" means products with `A`.
#[derive(Debug, Clone, Default)]
pub struct MatvecCounter {
    pub matvec_count: u64,
    pub precond_count: u64,
}

impl MatvecCounter {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Sparse symmetric matrix in CSR format with both triangles stored.
///
/// Invariants (checked at construction): `row_ptr` non-decreasing with
/// `n + 1` entries, column indices strictly increasing within each row,
/// every stored `(i, j, v)` mirrored by `(j, i, v)` with the identical
/// value, all values finite.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds a matrix from coordinate entries. Entries may specify either
    /// triangle (or both); duplicates are summed; the missing mirror of an
    /// off-diagonal entry is filled in automatically. When both `(i, j)`
    /// and `(j, i)` are given they must sum to the same value within
    /// `1e-13` relative, else the matrix is rejected as unsymmetric.
    pub fn from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "index ({i}, {j}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidMatrix(format!(
                    "non-finite value at ({i}, {j})"
                )));
            }
            *map.entry((i, j)).or_insert(0.0) += v;
        }

        // Mirror and check symmetry where both triangles were given.
        let mut full: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut max_abs = 0.0f64;
        for &v in map.values() {
            max_abs = max_abs.max(v.abs());
        }
        for (&(i, j), &v) in &map {
            if i == j {
                full.insert((i, j), v);
                continue;
            }
            match map.get(&(j, i)) {
                Some(&w) => {
                    if (v - w).abs() > 1e-13 * max_abs.max(1e-300) {
                        return Err(Error::InvalidMatrix(format!(
                            "unsymmetric entries at ({i}, {j}): {v} vs {w}"
                        )));
                    }
                    full.insert((i, j), v);
                }
                None => {
                    full.insert((i, j), v);
                    full.insert((j, i), v);
                }
            }
        }

        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in full.keys() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = full.len();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        // BTreeMap iterates (i, j) in row-major sorted order.
        for ((_, j), v) in full {
            col_idx.push(j);
            values.push(v);
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_entries(n, (0..n).map(|i| (i, i, 1.0))).expect("identity is valid")
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::from_entries(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries (both triangles counted).
    pub fn nnz_stored(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vector {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Uncounted kernel: `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vector {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// Counted matrix-vector product; increments `counter.matvec_count`.
    pub fn spmv(&self, x: &[f64], counter: &mut MatvecCounter) -> Result<Vector> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        counter.matvec_count += 1;
        Ok(self.mul(x))
    }

    /// `sqrt(Σ v²)` over all stored entries; off-diagonals count twice
    /// because both triangles are stored.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dense copy, for small-matrix oracles and reference decompositions.
    pub fn to_dense(&self) -> crate::dense::ProjectionMatrix {
        let mut t = crate::dense::ProjectionMatrix::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.set(i, j, v);
            }
        }
        t
    }
}

/// Kinds of deterministic test matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Laplacian1d,
    Laplacian2d,
    DiagClustered,
    DiagUniform,
}

/// Tridiagonal (-1, 2, -1) of order `n`.
pub fn laplacian_1d(n: usize) -> Result<SparseSymMatrix> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("laplacian1d needs n >= 2, got {n}")));
    }
    let mut entries = Vec::with_capacity(3 * n);
    for i in 0..n {
        entries.push((i, i, 2.0));
        if i + 1 < n {
            entries.push((i, i + 1, -1.0));
        }
    }
    SparseSymMatrix::from_entries(n, entries)
}

/// Five-point stencil on a √n × √n grid; `n` must be a perfect square.
pub fn laplacian_2d(n: usize) -> Result<SparseSymMatrix> {
    let side = (n as f64).sqrt().round() as usize;
    if n < 4 || side * side != n {
        return Err(Error::InvalidConfig(format!(
            "laplacian2d needs a perfect square n >= 4, got {n}"
        )));
    }
    let idx = |r: usize, c: usize| r * side + c;
    let mut entries = Vec::with_capacity(5 * n);
    for r in 0..side {
        for c in 0..side {
            let i = idx(r, c);
            entries.push((i, i, 4.0));
            if c + 1 < side {
                entries.push((i, idx(r, c + 1), -1.0));
            }
            if r + 1 < side {
                entries.push((i, idx(r + 1, c), -1.0));
            }
        }
    }
    SparseSymMatrix::from_entries(n, entries)
}

/// Diagonal matrix whose leading `cluster_size` values accumulate
/// geometrically at 1 from above, `d_i = 1 + 10^(-decay·i)`, followed by
/// uniformly spaced values `3, 4, 5, ...`.
pub fn diag_clustered(n: usize, cluster_size: usize, decay: f64) -> Result<SparseSymMatrix> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("diag_clustered needs n >= 2, got {n}")));
    }
    let cs = cluster_size.min(n);
    let d: Vector = (0..n)
        .map(|i| {
            if i < cs {
                1.0 + 10f64.powf(-decay * i as f64)
            } else {
                3.0 + (i - cs) as f64
            }
        })
        .collect();
    SparseSymMatrix::from_diagonal(&d)
}

/// `diag(1, 2, ..., n)`.
pub fn diag_uniform(n: usize) -> Result<SparseSymMatrix> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("diag_uniform needs n >= 2, got {n}")));
    }
    let d: Vector = (1..=n).map(|i| i as f64).collect();
    SparseSymMatrix::from_diagonal(&d)
}

/// Parameters for [`generate_test_matrix`]; only `diag_clustered` reads them.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorParams {
    pub cluster_size: usize,
    pub cluster_decay: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            cluster_size: 20,
            cluster_decay: 1.0,
        }
    }
}

pub fn generate_test_matrix(
    kind: GeneratorKind,
    n: usize,
    params: GeneratorParams,
) -> Result<SparseSymMatrix> {
    match kind {
        GeneratorKind::Laplacian1d => laplacian_1d(n),
        GeneratorKind::Laplacian2d => laplacian_2d(n),
        GeneratorKind::DiagClustered => {
            diag_clustered(n, params.cluster_size.min(n / 2), params.cluster_decay)
        }
        GeneratorKind::DiagUniform => diag_uniform(n),
    }
}

/// Analytic eigenvalues of `laplacian_1d(n)`: `4 sin²(iπ / (2(n+1)))`,
/// `i = 1..=n`, ascending.
pub fn laplacian_1d_eigenvalue(n: usize, i: usize) -> f64 {
    let arg = i as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0));
    4.0 * arg.sin().powi(2)
}
