//! Uniform operator abstraction for the system matrix, preconditioners
//! approximating `(A - σB)⁻¹`, and user-supplied operators, with counted
//! applications.
//!
//! Built-in preconditioners are Jacobi (floored diagonal inverse, SPD by
//! construction) and no-fill incomplete Cholesky of `A - σB` on the
//! sparsity pattern of `A`, with a geometric diagonal-shift retry ladder
//! on pivot breakdown.

use crate::error::Error;
use crate::sparse::{MatvecCounter, SparseSymMatrix, Vector};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecondKind {
    #[default]
    None,
    Jacobi,
    Ic0,
}

impl std::str::FromStr for PrecondKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PrecondKind::None),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "ic0" => Ok(PrecondKind::Ic0),
            other => Err(Error::InvalidConfig(format!(
                "unknown preconditioner {other:?} (expected none, jacobi, or ic0)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RebuildPolicy {
    /// Build once per solve with the configured shift.
    #[default]
    Fixed,
    /// Rebuild at every restart with the current Ritz shift.
    PerCycle,
}

/// How a preconditioner is built. `shift` is the σ in `A - σB`; the
/// default of 0 matches factorizing `A` itself.
#[derive(Debug, Clone, Copy)]
pub struct PreconditionerSpec {
    pub kind: PrecondKind,
    pub shift: f64,
    /// Relative diagonal floor for the Jacobi preconditioner.
    pub diag_floor: f64,
    pub rebuild: RebuildPolicy,
}

impl Default for PreconditionerSpec {
    fn default() -> Self {
        Self {
            kind: PrecondKind::None,
            shift: 0.0,
            diag_floor: 1e-8,
            rebuild: RebuildPolicy::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Matrix,
    Jacobi,
    Ic0,
    Identity,
    User,
}

enum OperatorImpl {
    Identity,
    /// Stores the inverted diagonal; application multiplies entrywise.
    Diagonal(Vector),
    /// Lower-triangular factor in CSR; application is the solve pair
    /// `L y = x`, `Lᵀ z = y`.
    LowerFactor {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
    Matrix(SparseSymMatrix),
    User(Box<dyn Fn(&[f64]) -> Vector + Send + Sync>),
}

impl std::fmt::Debug for OperatorImpl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorImpl::Identity => f.write_str("Identity"),
            OperatorImpl::Diagonal(_) => f.write_str("Diagonal"),
            OperatorImpl::LowerFactor { .. } => f.write_str("LowerFactor"),
            OperatorImpl::Matrix(_) => f.write_str("Matrix"),
            OperatorImpl::User(_) => f.write_str("User"),
        }
    }
}

/// An n-dimensional symmetric linear operator with a kind tag that
/// routes counter increments: matrix applications count as matvecs,
/// everything else as preconditioner applications.
#[derive(Debug)]
pub struct OperatorHandle {
    n: usize,
    kind: OperatorKind,
    imp: OperatorImpl,
}

impl OperatorHandle {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            kind: OperatorKind::Identity,
            imp: OperatorImpl::Identity,
        }
    }

    pub fn from_matrix(m: SparseSymMatrix) -> Self {
        Self {
            n: m.n(),
            kind: OperatorKind::Matrix,
            imp: OperatorImpl::Matrix(m),
        }
    }

    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vector + Send + Sync + 'static,
    {
        Self {
            n,
            kind: OperatorKind::User,
            imp: OperatorImpl::User(Box::new(f)),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Applies the operator and increments the matching counter.
    pub fn apply(&self, x: &[f64], counter: &mut MatvecCounter) -> Result<Vector> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        match self.kind {
            OperatorKind::Matrix => counter.matvec_count += 1,
            _ => counter.precond_count += 1,
        }
        Ok(self.apply_raw(x))
    }

    fn apply_raw(&self, x: &[f64]) -> Vector {
        match &self.imp {
            OperatorImpl::Identity => x.to_vec(),
            OperatorImpl::Diagonal(dinv) => x.iter().zip(dinv).map(|(v, d)| v * d).collect(),
            OperatorImpl::LowerFactor {
                row_ptr,
                col_idx,
                values,
            } => {
                let n = self.n;
                // Forward solve L y = x.
                let mut y = x.to_vec();
                for i in 0..n {
                    let lo = row_ptr[i];
                    let hi = row_ptr[i + 1];
                    let mut acc = y[i];
                    let mut diag = 1.0;
                    for k in lo..hi {
                        let j = col_idx[k];
                        if j < i {
                            acc -= values[k] * y[j];
                        } else {
                            diag = values[k];
                        }
                    }
                    y[i] = acc / diag;
                }
                // Backward solve Lᵀ z = y using row-wise updates.
                for i in (0..n).rev() {
                    let lo = row_ptr[i];
                    let hi = row_ptr[i + 1];
                    let diag = values[hi - 1];
                    y[i] /= diag;
                    let zi = y[i];
                    for k in lo..hi - 1 {
                        y[col_idx[k]] -= values[k] * zi;
                    }
                }
                y
            }
            OperatorImpl::Matrix(m) => m.mul(x),
            OperatorImpl::User(f) => f(x),
        }
    }
}

/// Counted application; thin wrapper so call sites mirror `spmv`.
pub fn apply_operator(
    m: &OperatorHandle,
    x: &[f64],
    counter: &mut MatvecCounter,
) -> Result<Vector> {
    m.apply(x, counter)
}

/// Jacobi preconditioner: `M = diag(d)⁻¹` with
/// `d_i = max(|A_ii - σ B_ii|, ε_d · max_j |A_jj|)`. The floor keeps it
/// SPD for any shift.
pub fn build_jacobi(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    sigma: f64,
    diag_floor: f64,
) -> OperatorHandle {
    let da = a.diagonal();
    let max_abs = da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (diag_floor * max_abs).max(f64::MIN_POSITIVE);
    let dinv: Vector = (0..a.n())
        .map(|i| {
            let bii = b.map_or(1.0, |m| m.get(i, i));
            let d = (da[i] - sigma * bii).abs().max(floor);
            1.0 / d
        })
        .collect();
    OperatorHandle {
        n: a.n(),
        kind: OperatorKind::Jacobi,
        imp: OperatorImpl::Diagonal(dinv),
    }
}

/// No-fill incomplete Cholesky `L Lᵀ ≈ A - σB` restricted to the lower
/// sparsity pattern of `A`. On pivot breakdown the factorization retries
/// on `A - σB + αI` with `α ∈ {1e-8, 1e-6, 1e-4, 1e-2} · ‖A‖_F / √n`;
/// if the largest shift still breaks down an error advises the Jacobi
/// fallback.
pub fn build_ic0(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    sigma: f64,
) -> Result<OperatorHandle> {
    let n = a.n();
    if let Some(bm) = b {
        if bm.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bm.n(),
            });
        }
    }
    let alpha_unit = a.frobenius_norm() / (n as f64).sqrt();
    let mut shifts = vec![0.0];
    shifts.extend([1e-8, 1e-6, 1e-4, 1e-2].iter().map(|s| s * alpha_unit));
    for alpha in shifts {
        if let Some(factor) = try_ic0(a, b, sigma, alpha) {
            return Ok(OperatorHandle {
                n,
                kind: OperatorKind::Ic0,
                imp: factor,
            });
        }
    }
    Err(Error::PrecondBreakdown)
}

fn try_ic0(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    sigma: f64,
    alpha: f64,
) -> Option<OperatorImpl> {
    let n = a.n();
    // Lower-triangular pattern of A, with values of A - σB + αI.
    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut has_diag = false;
        for (j, v) in a.row(i) {
            if j > i {
                break;
            }
            let bij = match b {
                Some(bm) => bm.get(i, j),
                None => {
                    if i == j {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            let mut val = v - sigma * bij;
            if i == j {
                val += alpha;
                has_diag = true;
            }
            col_idx.push(j);
            values.push(val);
        }
        if !has_diag {
            // Pattern needs an explicit diagonal slot for the factor.
            col_idx.push(i);
            values.push(alpha - sigma * b.map_or(1.0, |bm| bm.get(i, i)));
        }
        row_ptr[i + 1] = col_idx.len();
    }

    // Column-access lists for the sparse row-by-row factorization.
    for i in 0..n {
        let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
        for k in lo..hi - 1 {
            let j = col_idx[k];
            // L_ij = (C_ij - Σ_{p<j} L_ip L_jp) / L_jj over shared pattern.
            let mut v = values[k];
            let (jlo, jhi) = (row_ptr[j], row_ptr[j + 1]);
            let mut ip = lo;
            let mut jp = jlo;
            while ip < k && jp < jhi - 1 {
                match col_idx[ip].cmp(&col_idx[jp]) {
                    std::cmp::Ordering::Less => ip += 1,
                    std::cmp::Ordering::Greater => jp += 1,
                    std::cmp::Ordering::Equal => {
                        v -= values[ip] * values[jp];
                        ip += 1;
                        jp += 1;
                    }
                }
            }
            values[k] = v / values[jhi - 1];
        }
        // Diagonal pivot.
        let mut d = values[hi - 1];
        for k in lo..hi - 1 {
            d -= values[k] * values[k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        values[hi - 1] = d.sqrt();
    }
    Some(OperatorImpl::LowerFactor {
        row_ptr,
        col_idx,
        values,
    })
}

/// Builds the preconditioner named by `spec`; `Ok(None)` for `none`.
pub fn build_preconditioner(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    spec: &PreconditionerSpec,
) -> Result<Option<OperatorHandle>> {
    match spec.kind {
        PrecondKind::None => Ok(None),
        PrecondKind::Jacobi => Ok(Some(build_jacobi(a, b, spec.shift, spec.diag_floor))),
        PrecondKind::Ic0 => build_ic0(a, b, spec.shift).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use crate::sparse::{diag_clustered, diag_uniform, laplacian_1d};
    use crate::vec::{dot, norm2};

    #[test]
    fn jacobi_on_uniform_diagonal() {
        let a = diag_uniform(5).unwrap();
        let m = build_jacobi(&a, None, 0.0, 1e-8);
        let mut c = MatvecCounter::new();
        let y = m.apply(&[1.0, 1.0, 1.0, 1.0, 1.0], &mut c).unwrap();
        for (i, v) in y.iter().enumerate() {
            assert!((v - 1.0 / (i as f64 + 1.0)).abs() < 1e-15);
        }
        assert_eq!(c.precond_count, 1);
        assert_eq!(c.matvec_count, 0);
    }

    #[test]
    fn jacobi_floors_zero_diagonal() {
        let a = SparseSymMatrix::from_entries(2, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 1, 0.0)])
            .unwrap();
        let m = build_jacobi(&a, None, 0.0, 1e-8);
        let mut c = MatvecCounter::new();
        let y = m.apply(&[0.0, 1.0], &mut c).unwrap();
        assert!(y[1].is_finite() && y[1] > 0.0);
        // Floored entry: 1 / (1e-8 · 4)
        assert!((y[1] - 1.0 / 4e-8).abs() / y[1] < 1e-12);
    }

    #[test]
    fn jacobi_on_laplacian_is_half_identity() {
        let a = laplacian_1d(100).unwrap();
        let m = build_jacobi(&a, None, 0.0, 1e-8);
        let mut c = MatvecCounter::new();
        let x: Vector = (0..100).map(|i| i as f64).collect();
        let y = m.apply(&x, &mut c).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((yi - 0.5 * xi).abs() < 1e-14);
        }
    }

    #[test]
    fn ic0_is_exact_on_tridiagonal() {
        // Tridiagonal SPD: Cholesky has no fill, so IC(0) is exact.
        let a = laplacian_1d(50).unwrap();
        let m = build_ic0(&a, None, 0.0).unwrap();
        let mut c = MatvecCounter::new();
        let mut rng = XorShift64Star::new(4);
        let x: Vector = (0..50).map(|_| rng.next_centered()).collect();
        let ax = a.mul(&x);
        let y = m.apply(&ax, &mut c).unwrap();
        let mut err: f64 = 0.0;
        for (yi, xi) in y.iter().zip(&x) {
            err = err.max((yi - xi).abs());
        }
        assert!(err <= 1e-10 * norm2(&x), "err = {err}");
        assert_eq!(c.precond_count, 1);
    }

    #[test]
    fn ic0_identity_is_identity() {
        let a = SparseSymMatrix::identity(4);
        let m = build_ic0(&a, None, 0.0).unwrap();
        let mut c = MatvecCounter::new();
        let y = m.apply(&[1.0, 2.0, 3.0, 4.0], &mut c).unwrap();
        for (i, v) in y.iter().enumerate() {
            assert!((v - (i as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn ic0_on_shifted_diagonal_is_exact_inverse() {
        let a = diag_clustered(100, 20, 1.0).unwrap();
        let m = build_ic0(&a, None, 0.5).unwrap();
        let d = a.diagonal();
        let mut c = MatvecCounter::new();
        let x = vec![1.0; 100];
        let y = m.apply(&x, &mut c).unwrap();
        for (yi, di) in y.iter().zip(&d) {
            assert!((yi - 1.0 / (di - 0.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn ic0_retries_with_shift_on_mildly_indefinite_matrix() {
        // A - σI has one slightly negative pivot; the α ladder fixes it.
        let a = diag_uniform(6).unwrap();
        let m = build_ic0(&a, None, 1.0001).unwrap();
        let mut c = MatvecCounter::new();
        let mut rng = XorShift64Star::new(9);
        for _ in 0..20 {
            let x: Vector = (0..6).map(|_| rng.next_centered()).collect();
            let y = m.apply(&x, &mut c).unwrap();
            assert!(dot(&x, &y) > 0.0, "preconditioner is not positive definite");
        }
    }

    #[test]
    fn ic0_reports_breakdown_when_shift_ladder_is_exhausted() {
        // A - 10·I is strongly negative definite; no admissible α fixes it.
        let a = diag_uniform(6).unwrap();
        match build_ic0(&a, None, 10.0) {
            Err(Error::PrecondBreakdown) => {}
            other => panic!("expected PrecondBreakdown, got {other:?}"),
        }
    }

    #[test]
    fn built_preconditioners_are_spd_and_symmetric() {
        let a = laplacian_1d(60).unwrap();
        let mut rng = XorShift64Star::new(21);
        for handle in [
            build_jacobi(&a, None, 0.0, 1e-8),
            build_ic0(&a, None, 0.0).unwrap(),
        ] {
            let mut c = MatvecCounter::new();
            for _ in 0..100 {
                let x: Vector = (0..60).map(|_| rng.next_centered()).collect();
                let y = handle.apply(&x, &mut c).unwrap();
                assert!(dot(&x, &y) > 0.0);
            }
            // Symmetry of application.
            let x: Vector = (0..60).map(|_| rng.next_centered()).collect();
            let y: Vector = (0..60).map(|_| rng.next_centered()).collect();
            let xmy = dot(&x, &handle.apply(&y, &mut c).unwrap());
            let ymx = dot(&y, &handle.apply(&x, &mut c).unwrap());
            assert!((xmy - ymx).abs() <= 1e-10 * xmy.abs().max(ymx.abs()).max(1e-300));
        }
    }

    #[test]
    fn operator_linearity() {
        let a = laplacian_1d(40).unwrap();
        let m = build_ic0(&a, None, 0.0).unwrap();
        let mut c = MatvecCounter::new();
        let mut rng = XorShift64Star::new(2);
        let x: Vector = (0..40).map(|_| rng.next_centered()).collect();
        let y: Vector = (0..40).map(|_| rng.next_centered()).collect();
        let sum: Vector = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let mx = m.apply(&x, &mut c).unwrap();
        let my = m.apply(&y, &mut c).unwrap();
        let msum = m.apply(&sum, &mut c).unwrap();
        let scale = norm2(&msum).max(1.0);
        for i in 0..40 {
            assert!((msum[i] - mx[i] - my[i]).abs() <= 1e-12 * (norm2(&x) + norm2(&y)) * scale);
        }
    }

    #[test]
    fn identity_and_matrix_kinds_route_counters() {
        let a = laplacian_1d(5).unwrap();
        let id = OperatorHandle::identity(5);
        let mat = OperatorHandle::from_matrix(a);
        let mut c = MatvecCounter::new();
        let x = vec![1.0; 5];
        assert_eq!(id.apply(&x, &mut c).unwrap(), x);
        assert_eq!(c.precond_count, 1);
        assert_eq!(c.matvec_count, 0);
        mat.apply(&x, &mut c).unwrap();
        assert_eq!(c.matvec_count, 1);
        assert!(mat.apply(&[1.0; 4], &mut c).is_err());
    }

    #[test]
    fn jacobi_diag_2_example() {
        let a = SparseSymMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
        let m = build_jacobi(&a, None, 0.0, 1e-8);
        let mut c = MatvecCounter::new();
        assert_eq!(m.apply(&[4.0, 4.0], &mut c).unwrap(), vec![2.0, 2.0]);
    }
}
