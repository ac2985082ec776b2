//! Small dense symmetric eigen-decompositions and (B-)orthonormalization
//! primitives.
//!
//! The eigensolver is cyclic Jacobi: foolproof on symmetric matrices,
//! fully deterministic, and fast enough for the projected problems here
//! (order at most a few hundred). Generalized pencils are reduced with a
//! Cholesky factor of the right-hand matrix.

use crate::error::Error;
use crate::sparse::{SparseSymMatrix, Vector};
use crate::vec::{axpy, b_norm, dot, BasisBlock};
use crate::Result;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense symmetric matrix of small order, row-major storage. Holds the
/// incrementally built projection `T = Uᵀ A U` and the projected pencil
/// matrices.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    k: usize,
    data: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            data: vec![0.0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.len();
        let mut m = Self::zeros(k);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), k);
            for (j, &v) in r.iter().enumerate() {
                m.data[i * k + j] = v;
            }
        }
        m
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn order(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.k + j] = v;
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    /// Leading principal submatrix of order `m`.
    pub fn leading(&self, m: usize) -> ProjectionMatrix {
        assert!(m <= self.k);
        let mut out = ProjectionMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// `(T + Tᵀ) / 2`; the incremental update fills one triangle, so
    /// every decomposition goes through this first.
    pub fn symmetrized(&self) -> ProjectionMatrix {
        let mut out = self.clone();
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest deviation from symmetry, `max |T_ij - T_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.k);
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }
}

/// Spectral decomposition with eigenvalues ascending and orthonormal
/// eigenvector columns. The sign convention fixes each vector so its
/// largest-magnitude component is positive (ties broken by lowest index).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<Vector>,
}

impl EigenDecomposition {
    /// Residual `max |T y_i - θ_i y_i|` against a given matrix.
    pub fn max_residual(&self, t: &ProjectionMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (theta, y) in self.values.iter().zip(&self.vectors) {
            let ty = t.matvec(y);
            for (tyi, yi) in ty.iter().zip(y) {
                worst = worst.max((tyi - theta * yi).abs());
            }
        }
        worst
    }
}

fn apply_sign_convention(vectors: &mut [Vector]) {
    for v in vectors.iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if v[best] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Full spectral decomposition of a small symmetric matrix by cyclic
/// Jacobi rotations.
pub fn sym_eig_small(t: &ProjectionMatrix) -> Result<EigenDecomposition> {
    let k = t.order();
    if k == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut a = t.symmetrized();
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigNonConvergence);
    }
    // v[i][j] accumulates the rotations; columns become eigenvectors.
    let mut v = ProjectionMatrix::zeros(k);
    for i in 0..k {
        v.set(i, i, 1.0);
    }

    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a.get(i, j).powi(2);
            }
        }
        if (2.0 * off).sqrt() <= stop {
            converged = true;
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // Tangent of the rotation angle, smaller root for stability.
                let tang = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + tang * tang).sqrt();
                let s = tang * c;

                for i in 0..k {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set_sym(i, p, c * aip - s * aiq);
                    a.set_sym(i, q, s * aip + c * aiq);
                }
                a.set(p, p, app - tang * apq);
                a.set(q, q, aqq + tang * apq);
                a.set_sym(p, q, 0.0);

                for i in 0..k {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    if !converged {
        // One last check; the sweep cap only trips on corrupted input.
        let mut off = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a.get(i, j).powi(2);
            }
        }
        if (2.0 * off).sqrt() > 1e-12 * scale {
            return Err(Error::EigNonConvergence);
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort: equal Ritz values keep Jacobi output order.
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors: Vec<Vector> = order
        .iter()
        .map(|&j| (0..k).map(|i| v.get(i, j)).collect())
        .collect();
    apply_sign_convention(&mut vectors);
    Ok(EigenDecomposition { values, vectors })
}

/// Dense Cholesky `S = L Lᵀ`; returns the lower factor row-major.
/// Fails with the pivot index when `S` is not positive definite, which
/// upstream callers use to identify a dependent basis column.
pub fn cholesky_lower(s: &ProjectionMatrix) -> Result<Vec<f64>> {
    let k = s.order();
    let sym = s.symmetrized();
    let mut l = vec![0.0f64; k * k];
    let max_diag = (0..k).fold(0.0f64, |m, i| m.max(sym.get(i, i).abs()));
    let floor = max_diag.max(f64::MIN_POSITIVE) * 1e-14 * k as f64;
    for j in 0..k {
        let mut d = sym.get(j, j);
        for p in 0..j {
            d -= l[j * k + p] * l[j * k + p];
        }
        if d <= floor {
            return Err(Error::CholeskyBreakdown { index: j });
        }
        let dj = d.sqrt();
        l[j * k + j] = dj;
        for i in (j + 1)..k {
            let mut v = sym.get(i, j);
            for p in 0..j {
                v -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = v / dj;
        }
    }
    Ok(l)
}

/// Generalized eigenpairs of the pencil `(T, S)` with `S` positive
/// definite, via `S = L Lᵀ` and a standard decomposition of `L⁻¹ T L⁻ᵀ`.
/// Eigenvectors satisfy `wᵀ S w = 1`; values ascend.
pub fn sym_eig_pencil_small(
    t: &ProjectionMatrix,
    s: &ProjectionMatrix,
) -> Result<EigenDecomposition> {
    let k = t.order();
    if s.order() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: s.order(),
        });
    }
    let l = cholesky_lower(s)?;

    // W = L⁻¹ T  (forward solve on each column of T)
    let tsym = t.symmetrized();
    let mut w = vec![0.0f64; k * k];
    for col in 0..k {
        for i in 0..k {
            let mut v = tsym.get(i, col);
            for p in 0..i {
                v -= l[i * k + p] * w[p * k + col];
            }
            w[i * k + col] = v / l[i * k + i];
        }
    }
    // C = W L⁻ᵀ  ⟺  Cᵀ = L⁻¹ Wᵀ, so forward-solve the rows of W.
    let mut c = ProjectionMatrix::zeros(k);
    for row in 0..k {
        let mut x = vec![0.0f64; k];
        for i in 0..k {
            let mut v = w[row * k + i];
            for p in 0..i {
                v -= l[i * k + p] * x[p];
            }
            x[i] = v / l[i * k + i];
        }
        for i in 0..k {
            c.set(row, i, x[i]);
        }
    }

    let inner = sym_eig_small(&c)?;
    // Back-transform: w_i = L⁻ᵀ y_i.
    let mut vectors: Vec<Vector> = inner
        .vectors
        .iter()
        .map(|y| {
            let mut x = y.clone();
            for i in (0..k).rev() {
                x[i] /= l[i * k + i];
                let xi = x[i];
                for p in 0..i {
                    x[p] -= l[i * k + p] * xi;
                }
            }
            x
        })
        .collect();
    apply_sign_convention(&mut vectors);
    Ok(EigenDecomposition {
        values: inner.values,
        vectors,
    })
}

/// Outcome of orthogonalizing one vector against a basis.
#[derive(Debug)]
pub struct OrthogonalizeOutcome {
    /// B-normalized result.
    pub vector: Vector,
    /// B-norm just before the final normalization.
    pub norm: f64,
}

/// Repeat-pass threshold: another projection pass is taken whenever one
/// pass shrinks the norm by more than 1/√2 (twice is enough), up to
/// three passes before declaring breakdown.
const REORTH_DROP: f64 = std::f64::consts::FRAC_1_SQRT_2;
const REORTH_MAX_PASSES: usize = 3;
const BREAKDOWN_REL: f64 = 1e-14;

/// Core Gram-Schmidt loop used by the solvers, which keep B-images of
/// their basis columns. `cols` and `bcols` must be aligned; pass the same
/// slice twice for the Euclidean case. `bw` is the B-image of `w` and is
/// updated in place alongside it.
pub fn orthogonalize_against_images(
    w: &mut Vector,
    bw: &mut Vector,
    cols: &[&Vector],
    bcols: &[&Vector],
) -> std::result::Result<f64, ()> {
    debug_assert_eq!(cols.len(), bcols.len());
    let orig = dot(w, bw).max(0.0).sqrt();
    if orig == 0.0 {
        return Err(());
    }
    let mut prev = orig;
    for _ in 0..REORTH_MAX_PASSES {
        for (u, bu) in cols.iter().zip(bcols) {
            let coeff = dot(bu, w);
            if coeff != 0.0 {
                axpy(-coeff, u, w);
                axpy(-coeff, bu, bw);
            }
        }
        let now = dot(w, bw).max(0.0).sqrt();
        if now <= BREAKDOWN_REL * orig {
            return Err(());
        }
        if now > REORTH_DROP * prev {
            return Ok(now);
        }
        prev = now;
    }
    Err(())
}

/// Orthogonalizes `w` against the (B-)orthonormal columns of `basis`,
/// then B-normalizes. Returns the pre-normalization norm. Errors with
/// [`Error::OrthogonalizationBreakdown`] when `w` is numerically in the
/// span of the basis, in which case the caller must replace `w`.
pub fn orthogonalize_vector(
    w: &Vector,
    basis: &BasisBlock,
    b: Option<&SparseSymMatrix>,
) -> Result<OrthogonalizeOutcome> {
    let mut v = w.clone();
    let mut bv = match b {
        Some(m) => m.mul(&v),
        None => v.clone(),
    };
    let bcols_owned: Vec<Vector> = match b {
        Some(m) => basis.columns().iter().map(|c| m.mul(c)).collect(),
        None => Vec::new(),
    };
    let cols: Vec<&Vector> = basis.columns().iter().collect();
    let bcols: Vec<&Vector> = if b.is_some() {
        bcols_owned.iter().collect()
    } else {
        cols.clone()
    };
    let norm = orthogonalize_against_images(&mut v, &mut bv, &cols, &bcols)
        .map_err(|_| Error::OrthogonalizationBreakdown)?;
    let inv = 1.0 / norm;
    for x in v.iter_mut() {
        *x *= inv;
    }
    Ok(OrthogonalizeOutcome { vector: v, norm })
}

/// B-orthonormalizes the columns of `v`, dropping numerically dependent
/// columns. The span is preserved up to the drops. Errors when nothing
/// survives.
pub fn b_orthonormalize_block(v: &BasisBlock, b: Option<&SparseSymMatrix>) -> Result<BasisBlock> {
    let mut out = BasisBlock::new(v.dim());
    for col in v.columns() {
        let nrm = b_norm(b, col);
        if nrm == 0.0 {
            continue;
        }
        if out.is_empty() {
            let mut c = col.clone();
            for x in c.iter_mut() {
                *x /= nrm;
            }
            out.push(c);
            continue;
        }
        match orthogonalize_vector(col, &out, b) {
            Ok(o) => out.push(o.vector),
            Err(Error::OrthogonalizationBreakdown) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok(out)
}
