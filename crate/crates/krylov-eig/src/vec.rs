//! Dense vector helpers and the column-block type used for subspace bases.

use crate::sparse::{SparseSymMatrix, Vector};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

/// B-inner product `xᵀ B y`; Euclidean when `b` is absent.
pub fn b_inner(b: Option<&SparseSymMatrix>, x: &[f64], y: &[f64]) -> f64 {
    match b {
        None => dot(x, y),
        Some(m) => {
            let mut by = vec![0.0; y.len()];
            m.mul_into(y, &mut by);
            dot(x, &by)
        }
    }
}

pub fn b_norm(b: Option<&SparseSymMatrix>, x: &[f64]) -> f64 {
    b_inner(b, x, x).max(0.0).sqrt()
}

/// An n×k block whose columns are basis vectors.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    n: usize,
    cols: Vec<Vector>,
}

impl BasisBlock {
    pub fn new(n: usize) -> Self {
        Self { n, cols: Vec::new() }
    }

    pub fn from_columns(cols: Vec<Vector>) -> Self {
        let n = cols.first().map_or(0, |c| c.len());
        debug_assert!(cols.iter().all(|c| c.len() == n));
        Self { n, cols }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn col(&self, j: usize) -> &Vector {
        &self.cols[j]
    }

    pub fn columns(&self) -> &[Vector] {
        &self.cols
    }

    pub fn push(&mut self, col: Vector) {
        debug_assert_eq!(col.len(), self.n);
        self.cols.push(col);
    }

    /// `block * y` for a coefficient vector with one entry per column.
    pub fn combine(&self, y: &[f64]) -> Vector {
        debug_assert_eq!(y.len(), self.ncols());
        let mut out = vec![0.0; self.n];
        for (c, coeff) in self.cols.iter().zip(y) {
            axpy(*coeff, c, &mut out);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.cols.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn random_vector(n: usize, rng: &mut crate::rng::XorShift64Star) -> Vector {
    let mut v = vec![0.0; n];
    rng.fill_centered(&mut v);
    v
}

/// Linear combinations of a set of columns: `out[j] = cols * y_j`.
/// Shared by basis rotation and image tracking at restart.
pub fn combine_columns(cols: &[Vector], coeffs: &[&[f64]]) -> Vec<Vector> {
    let n = cols.first().map_or(0, |c| c.len());
    coeffs
        .iter()
        .map(|y| {
            debug_assert_eq!(y.len(), cols.len());
            let mut out = vec![0.0; n];
            for (c, coeff) in cols.iter().zip(y.iter()) {
                axpy(*coeff, c, &mut out);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_axpy_norm() {
        let a = vec![1.0, 2.0, 3.0];
        let mut b = vec![4.0, 5.0, 6.0];
        assert_eq!(dot(&a, &b), 32.0);
        axpy(2.0, &a, &mut b);
        assert_eq!(b, vec![6.0, 9.0, 12.0]);
        assert!((norm2(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn block_combine() {
        let block = BasisBlock::from_columns(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(block.combine(&[3.0, 1.0]), vec![3.0, 2.0]);
    }
}
