//! Reference solvers: unrestarted Lanczos (the optimality yardstick),
//! thick-restart Lanczos, and LOBPCG.
//!
//! All three use full reorthogonalization and the same stopping rule as
//! the main solver, `‖A x - θ B x‖ ≤ ‖A‖_F · tol`. The Lanczos variants
//! are standard-problem only; LOBPCG handles pencils and preconditioning.
//! `plus_k` in the shared configuration is ignored here.

use crate::dense::{b_orthonormalize_block, sym_eig_small, ProjectionMatrix};
use crate::error::Error;
use crate::operators::OperatorHandle;
use crate::rng::XorShift64Star;
use crate::solver::{CycleRecord, SolveStatus, SolverConfig, SolverReport};
use crate::sparse::{MatvecCounter, SparseSymMatrix, Vector};
use crate::trplk::convergence_check;
use crate::vec::{axpy, combine_columns, dot, norm2, random_vector, scale, BasisBlock};
use crate::Result;

/// Lanczos basis with structurally maintained tridiagonal-plus-arrowhead
/// projection, shared by the unrestarted and thick-restart variants.
struct LanczosState<'a> {
    a: &'a SparseSymMatrix,
    u: Vec<Vector>,
    t: ProjectionMatrix,
    /// Next basis vector and its couplings `T[i][new]` to the current
    /// columns; `None` after an invariant-subspace breakdown.
    pending: Option<(Vector, Vec<f64>)>,
    /// Fill the whole projection column at the next processing step
    /// (set after random injection, whose couplings are unknown).
    full_fill_next: bool,
    counter: MatvecCounter,
}

impl<'a> LanczosState<'a> {
    fn new(a: &'a SparseSymMatrix, capacity: usize, v1: Vector) -> Self {
        Self {
            a,
            u: Vec::new(),
            t: ProjectionMatrix::zeros(capacity),
            pending: Some((v1, Vec::new())),
            full_fill_next: false,
            counter: MatvecCounter::new(),
        }
    }

    fn len(&self) -> usize {
        self.u.len()
    }

    /// Moves the pending vector into the basis and runs one Lanczos step
    /// on it: one A-product, the diagonal entry, full
    /// reorthogonalization, and the next pending vector. Returns false
    /// on invariant-subspace breakdown (no next vector).
    fn step(&mut self) -> Result<bool> {
        let (v, couplings) = match self.pending.take() {
            Some(x) => x,
            None => return Ok(false),
        };
        let j = self.u.len();
        let mut z = self.a.spmv(&v, &mut self.counter)?;
        if self.full_fill_next {
            for (i, col) in self.u.iter().enumerate() {
                self.t.set_sym(i, j, dot(col, &z));
            }
            self.full_fill_next = false;
        } else {
            for (i, &c) in couplings.iter().enumerate() {
                self.t.set_sym(i, j, c);
            }
        }
        self.t.set(j, j, dot(&v, &z));
        self.u.push(v);

        // Full reorthogonalization of the new direction.
        let cols: Vec<&Vector> = self.u.iter().collect();
        let mut zb = z.clone();
        match crate::dense::orthogonalize_against_images(&mut z, &mut zb, &cols, &cols) {
            Ok(beta) => {
                scale(1.0 / beta, &mut z);
                let mut couplings = vec![0.0; self.u.len()];
                couplings[self.u.len() - 1] = beta;
                self.pending = Some((z, couplings));
                Ok(true)
            }
            Err(()) => {
                self.pending = None;
                Ok(false)
            }
        }
    }

    /// Re-seeds the recurrence with a random direction orthogonal to the
    /// basis. Its projection column is computed explicitly at the next
    /// step. Returns false when nothing independent can be found.
    fn inject_random(&mut self, rng: &mut XorShift64Star) -> bool {
        if self.u.len() >= self.u.first().map_or(usize::MAX, |c| c.len()) {
            return false;
        }
        for _ in 0..4 {
            let mut w = random_vector(self.a.n(), rng);
            let mut wb = w.clone();
            let cols: Vec<&Vector> = self.u.iter().collect();
            if let Ok(norm) =
                crate::dense::orthogonalize_against_images(&mut w, &mut wb, &cols, &cols)
            {
                scale(1.0 / norm, &mut w);
                self.pending = Some((w, vec![0.0; self.u.len()]));
                self.full_fill_next = true;
                return true;
            }
        }
        false
    }

    fn rayleigh_ritz(&self) -> Result<crate::dense::EigenDecomposition> {
        sym_eig_small(&self.t.leading(self.u.len()))
    }

    /// `‖A (U y) - θ U y‖ = β_last |y_last|` from the recurrence; exact
    /// up to reorthogonalization rounding.
    fn residual_estimate(&self, y: &[f64]) -> f64 {
        match &self.pending {
            Some((_, couplings)) => {
                let mut acc = 0.0;
                for (c, yi) in couplings.iter().zip(y) {
                    acc += c * yi;
                }
                acc.abs()
            }
            None => 0.0,
        }
    }

    fn materialize(&self, y: &[f64]) -> Vector {
        let coeffs: Vec<&[f64]> = vec![y];
        combine_columns(&self.u, &coeffs).pop().expect("one column")
    }

    /// Explicit residual of a materialized pair, counted.
    fn verified_residual(&mut self, x: &Vector, theta: f64) -> Result<f64> {
        let mut r = self.a.spmv(x, &mut self.counter)?;
        axpy(-theta, x, &mut r);
        Ok(norm2(&r))
    }
}

fn starting_vector(
    n: usize,
    initial: Option<&Vector>,
    rng: &mut XorShift64Star,
) -> Result<Vector> {
    let mut v = match initial {
        Some(x) => {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
            x.clone()
        }
        None => random_vector(n, rng),
    };
    let nrm = norm2(&v);
    if nrm == 0.0 {
        return Err(Error::EmptyBasis);
    }
    scale(1.0 / nrm, &mut v);
    Ok(v)
}

fn final_report(
    a: &SparseSymMatrix,
    state: &LanczosState<'_>,
    eig: &crate::dense::EigenDecomposition,
    p: usize,
    history: Vec<CycleRecord>,
    status: SolveStatus,
) -> SolverReport {
    let avail = p.min(eig.values.len());
    let vectors: Vec<Vector> = (0..avail).map(|i| state.materialize(&eig.vectors[i])).collect();
    // Reported values are Rayleigh quotients of the materialized
    // vectors: for tiny eigenvalues these carry far less rounding than
    // the projected decomposition. Residuals use the refined values.
    let mut eigenvalues = Vec::with_capacity(avail);
    let mut residual_norms = Vec::with_capacity(avail);
    for x in &vectors {
        let ax = a.mul(x);
        let theta = dot(x, &ax) / dot(x, x);
        let mut r = ax;
        axpy(-theta, x, &mut r);
        eigenvalues.push(theta);
        residual_norms.push(norm2(&r));
    }
    SolverReport {
        eigenvalues,
        eigenvectors: BasisBlock::from_columns(vectors),
        residual_norms,
        history,
        matvecs: state.counter.matvec_count,
        precond_applies: state.counter.precond_count,
        status,
        max_t_deviation: None,
        max_gram_deviation: None,
        max_conjugacy_defect: None,
        max_shifted_conjugacy_defect: None,
        reseeds: 0,
    }
}

/// Full-reorthogonalization Lanczos without restarts, up to
/// `cfg.basis_cap` columns, with a Rayleigh-Ritz convergence check every
/// few steps. The per-check history gives matvec-resolution convergence
/// curves for overlay comparisons.
pub fn unrestarted_lanczos_solve(
    a: &SparseSymMatrix,
    cfg: &SolverConfig,
    initial: Option<&Vector>,
) -> Result<SolverReport> {
    let n = a.n();
    let p = cfg.nev;
    if p == 0 || p > n {
        return Err(Error::InvalidConfig(format!("nev = {p} invalid for n = {n}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    let cap = cfg.basis_cap.min(n).max(p + 1);
    let a_fro = a.frobenius_norm();
    let mut rng = XorShift64Star::new(cfg.seed);
    let v1 = starting_vector(n, initial, &mut rng)?;
    let mut state = LanczosState::new(a, cap, v1);

    const CHECK_EVERY: usize = 10;
    let mut history: Vec<CycleRecord> = Vec::new();
    let mut target = 0usize;
    let mut check_index = 0usize;
    let status;
    let mut eig;

    loop {
        let stepped = state.step()?;
        if !stepped && state.len() < cap && !state.inject_random(&mut rng) {
            // Basis cannot grow further; fall through to a final check.
        }
        let exhausted = state.pending.is_none() && state.len() >= n;
        let at_cap = state.len() >= cap;
        let do_check =
            state.len() % CHECK_EVERY == 0 || at_cap || state.pending.is_none();
        if !do_check {
            continue;
        }
        eig = state.rayleigh_ritz()?;
        check_index += 1;
        while target < p && target < eig.values.len() {
            let est = state.residual_estimate(&eig.vectors[target]);
            if est > 4.0 * a_fro * cfg.tol && !exhausted {
                break;
            }
            let x = state.materialize(&eig.vectors[target]);
            let verified = state.verified_residual(&x, eig.values[target])?;
            if !convergence_check(a_fro, verified, cfg.tol) {
                break;
            }
            target += 1;
        }
        let rec = target.min(p - 1).min(eig.values.len() - 1);
        history.push(CycleRecord {
            cycle: check_index,
            matvecs: state.counter.matvec_count,
            precond_applies: state.counter.precond_count,
            target_index: rec,
            rho: eig.values[rec],
            resid_norm: state.residual_estimate(&eig.vectors[rec]),
        });
        if target >= p {
            status = SolveStatus::Converged;
            break;
        }
        if at_cap || state.pending.is_none() {
            if state.pending.is_none() && state.len() < cap && state.inject_random(&mut rng) {
                continue;
            }
            status = if state.pending.is_none() && state.len() >= n {
                // Whole space spanned: the projection is exact, so the
                // pairs are as converged as they will get.
                SolveStatus::Breakdown
            } else {
                SolveStatus::MaxCycles
            };
            break;
        }
    }
    let eig = state.rayleigh_ritz()?;
    Ok(final_report(a, &state, &eig, p, history, status))
}

/// Thick-restart Lanczos: each cycle extends the basis to `max_basis`
/// columns, applies Rayleigh-Ritz, keeps the `restart_size` lowest Ritz
/// vectors plus the saved last Lanczos vector, and continues the
/// recurrence through the arrowhead coupling `T[i][k] = β · y_i[last]`.
pub fn trlan_solve(
    a: &SparseSymMatrix,
    cfg: &SolverConfig,
    initial: Option<&Vector>,
) -> Result<SolverReport> {
    let n = a.n();
    let p = cfg.nev;
    if p == 0 || p > n {
        return Err(Error::InvalidConfig(format!("nev = {p} invalid for n = {n}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    if cfg.restart_size >= cfg.max_basis {
        return Err(Error::InvalidConfig(format!(
            "restart_size = {} must stay below max_basis = {}",
            cfg.restart_size, cfg.max_basis
        )));
    }
    let q = cfg.max_basis.min(n);
    if q < p + 1 {
        return Err(Error::InvalidConfig(format!(
            "max_basis = {q} leaves no room to expand beyond nev = {p}"
        )));
    }
    let phat = cfg.restart_size.clamp(p, q - 1);
    let a_fro = a.frobenius_norm();
    let mut rng = XorShift64Star::new(cfg.seed);
    let v1 = starting_vector(n, initial, &mut rng)?;
    let mut state = LanczosState::new(a, q, v1);

    let mut history: Vec<CycleRecord> = Vec::new();
    let mut target = 0usize;
    let mut status = SolveStatus::MaxCycles;
    let mut eig = None;

    'outer: for cycle in 1..=cfg.max_cycles {
        // Grow the basis to q columns (or until the space closes).
        while state.len() < q {
            if !state.step()? && state.pending.is_none() {
                if state.len() >= n || !state.inject_random(&mut rng) {
                    break;
                }
            }
        }
        let e = state.rayleigh_ritz()?;
        let exhausted = state.pending.is_none();

        // Soft locking with explicit verification before each flag.
        while target < p && target < e.values.len() {
            let est = state.residual_estimate(&e.vectors[target]);
            if est > 4.0 * a_fro * cfg.tol && !exhausted {
                break;
            }
            let x = state.materialize(&e.vectors[target]);
            let verified = state.verified_residual(&x, e.values[target])?;
            if !convergence_check(a_fro, verified, cfg.tol) {
                break;
            }
            target += 1;
        }
        let rec = target.min(p - 1).min(e.values.len() - 1);
        history.push(CycleRecord {
            cycle,
            matvecs: state.counter.matvec_count,
            precond_applies: state.counter.precond_count,
            target_index: rec,
            rho: e.values[rec],
            resid_norm: state.residual_estimate(&e.vectors[rec]),
        });
        if target >= p {
            status = SolveStatus::Converged;
            eig = Some(e);
            break 'outer;
        }

        // Thick restart: keep phat Ritz vectors; the pending vector stays
        // and couples to them through the arrowhead entries.
        let keep = phat.min(e.values.len());
        let coeffs: Vec<&[f64]> = e.vectors[..keep].iter().map(|v| v.as_slice()).collect();
        let new_u = combine_columns(&state.u, &coeffs);
        let arrow: Vec<f64> = match &state.pending {
            Some((_, couplings)) => e.vectors[..keep]
                .iter()
                .map(|y| couplings.iter().zip(y).map(|(c, yi)| c * yi).sum())
                .collect(),
            None => vec![0.0; keep],
        };
        state.u = new_u;
        state.t = ProjectionMatrix::zeros(q);
        for (i, &theta) in e.values[..keep].iter().enumerate() {
            state.t.set(i, i, theta);
        }
        match state.pending.take() {
            Some((v, _)) => state.pending = Some((v, arrow)),
            None => {
                if state.len() < n && !state.inject_random(&mut rng) {
                    status = SolveStatus::Breakdown;
                    break 'outer;
                }
            }
        }
    }

    let eig = match eig {
        Some(e) => e,
        None => state.rayleigh_ritz()?,
    };
    Ok(final_report(a, &state, &eig, p, history, status))
}

/// One block entry of the LOBPCG subspace: a column with its A- and
/// (optional) B-images, kept aligned through orthonormalization.
struct BlockColumns {
    cols: Vec<Vector>,
    a_imgs: Vec<Vector>,
    b_imgs: Option<Vec<Vector>>,
}

impl BlockColumns {
    fn empty(with_b: bool) -> Self {
        Self {
            cols: Vec::new(),
            a_imgs: Vec::new(),
            b_imgs: if with_b { Some(Vec::new()) } else { None },
        }
    }

    fn len(&self) -> usize {
        self.cols.len()
    }

    fn b_col(&self, i: usize) -> &Vector {
        match &self.b_imgs {
            Some(b) => &b[i],
            None => &self.cols[i],
        }
    }

    fn push(&mut self, col: Vector, a_img: Vector, b_img: Option<Vector>) {
        self.cols.push(col);
        self.a_imgs.push(a_img);
        if let Some(b) = &mut self.b_imgs {
            b.push(b_img.expect("B-image required"));
        }
    }

    /// In-place B-orthonormalization (modified Gram-Schmidt with one
    /// repeat pass), applying every column operation to the images as
    /// well. Dependent columns are dropped. Never drops the first
    /// `protect` columns as a group unless numerically zero.
    fn orthonormalize(&mut self) -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::new();
        let n_cols = self.cols.len();
        let mut out: Vec<Vector> = Vec::with_capacity(n_cols);
        let mut out_a: Vec<Vector> = Vec::with_capacity(n_cols);
        let mut out_b: Option<Vec<Vector>> = self.b_imgs.as_ref().map(|_| Vec::new());
        for idx in 0..n_cols {
            let mut c = self.cols[idx].clone();
            let mut ai = self.a_imgs[idx].clone();
            let mut bi = self.b_imgs.as_ref().map(|b| b[idx].clone());
            let orig = {
                let bref = bi.as_ref().unwrap_or(&c);
                dot(&c, bref).max(0.0).sqrt()
            };
            if orig == 0.0 {
                continue;
            }
            let mut ok = true;
            for _pass in 0..2 {
                for (j, u) in out.iter().enumerate() {
                    let bu: &Vector = match &out_b {
                        Some(b) => &b[j],
                        None => u,
                    };
                    let coeff = dot(bu, &c);
                    if coeff != 0.0 {
                        axpy(-coeff, u, &mut c);
                        axpy(-coeff, &out_a[j], &mut ai);
                        if let (Some(bim), Some(bo)) = (&mut bi, &out_b) {
                            axpy(-coeff, &bo[j], bim);
                        }
                    }
                }
                let now = {
                    let bref = bi.as_ref().unwrap_or(&c);
                    dot(&c, bref).max(0.0).sqrt()
                };
                // Heavy cancellation leaves the tracked images with
                // amplified rounding; such columns carry no usable
                // direction, so drop them early.
                if now <= 1e-8 * orig {
                    ok = false;
                    break;
                }
                if _pass == 1 {
                    let inv = 1.0 / now;
                    scale(inv, &mut c);
                    scale(inv, &mut ai);
                    if let Some(bim) = &mut bi {
                        scale(inv, bim);
                    }
                }
            }
            if !ok {
                continue;
            }
            kept.push(idx);
            out.push(c);
            out_a.push(ai);
            if let (Some(bo), Some(bim)) = (&mut out_b, bi) {
                bo.push(bim);
            }
        }
        self.cols = out;
        self.a_imgs = out_a;
        self.b_imgs = out_b;
        kept
    }

    /// Rayleigh-Ritz over the orthonormalized block.
    fn rayleigh_ritz(&self) -> Result<crate::dense::EigenDecomposition> {
        let k = self.len();
        let mut t = ProjectionMatrix::zeros(k);
        for i in 0..k {
            for j in 0..=i {
                t.set_sym(i, j, dot(&self.cols[i], &self.a_imgs[j]));
            }
        }
        sym_eig_small(&t)
    }

    fn combine(&self, coeffs: &[&[f64]]) -> (Vec<Vector>, Vec<Vector>, Option<Vec<Vector>>) {
        let cols = combine_columns(&self.cols, coeffs);
        let a_imgs = combine_columns(&self.a_imgs, coeffs);
        let b_imgs = self
            .b_imgs
            .as_ref()
            .map(|b| combine_columns(b, coeffs));
        (cols, a_imgs, b_imgs)
    }
}

/// LOBPCG with a block of `nev` vectors: each iteration applies
/// Rayleigh-Ritz over the B-orthonormalized block
/// `[X_i, M R_i, X_{i-1}]` (previous Ritz vectors; set
/// `use_directions` for the implicit-difference search-direction
/// variant). Converged columns are soft-locked: they stay in the block
/// but stop consuming matvecs and preconditioner applications.
pub fn lobpcg_solve(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    m_op: Option<&OperatorHandle>,
    cfg: &SolverConfig,
    initial: Option<&BasisBlock>,
    use_directions: bool,
) -> Result<SolverReport> {
    let n = a.n();
    let p = cfg.nev;
    if p == 0 || p > n {
        return Err(Error::InvalidConfig(format!("nev = {p} invalid for n = {n}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    if let Some(bm) = b {
        if bm.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bm.n(),
            });
        }
    }
    let a_fro = a.frobenius_norm();
    let mut rng = XorShift64Star::new(cfg.seed);
    let mut counter = MatvecCounter::new();
    let mut reseeds = 0u64;

    // B-orthonormal starting block with counted A-images.
    let mut x_cols: Vec<Vector> = match initial {
        Some(block) => block.columns().to_vec(),
        None => (0..p).map(|_| random_vector(n, &mut rng)).collect(),
    };
    let mut x = loop {
        match b_orthonormalize_block(&BasisBlock::from_columns(x_cols.clone()), b) {
            Ok(block) if block.ncols() >= p => {
                break BasisBlock::from_columns(block.columns()[..p].to_vec())
            }
            _ => {
                reseeds += 1;
                if reseeds > 8 {
                    return Err(Error::EmptyBasis);
                }
                x_cols = (0..p).map(|_| random_vector(n, &mut rng)).collect();
            }
        }
    };

    let mut block = BlockColumns::empty(b.is_some());
    for col in x.columns() {
        let ai = a.spmv(col, &mut counter)?;
        let bi = b.map(|bm| bm.mul(col));
        block.push(col.clone(), ai, bi);
    }
    let eig = block.rayleigh_ritz()?;
    let coeffs: Vec<&[f64]> = eig.vectors.iter().map(|v| v.as_slice()).collect();
    let (cols, a_imgs, b_imgs) = block.combine(&coeffs);
    let mut thetas = eig.values.clone();
    let mut xblock = BlockColumns {
        cols,
        a_imgs,
        b_imgs,
    };
    x = BasisBlock::new(n); // consumed; the block carries the iterate now
    let _ = x;

    let mut prev: Option<BlockColumns> = None;
    let mut history: Vec<CycleRecord> = Vec::new();
    let mut status = SolveStatus::MaxCycles;
    let mut converged = vec![false; p];

    let residual =
        |bl: &BlockColumns, i: usize, theta: f64| -> Vector {
            let mut r = bl.a_imgs[i].clone();
            axpy(-theta, bl.b_col(i), &mut r);
            r
        };

    // Lock test shared by the initial state and the loop: verify with a
    // fresh counted product before flagging.
    let verify_flags = |bl: &mut BlockColumns,
                        thetas: &[f64],
                        converged: &mut [bool],
                        counter: &mut MatvecCounter|
     -> Result<()> {
        for i in 0..p {
            if converged[i] {
                continue;
            }
            let est = norm2(&residual(bl, i, thetas[i]));
            if est <= 4.0 * a_fro * cfg.tol {
                let fresh = a.spmv(&bl.cols[i], counter)?;
                bl.a_imgs[i] = fresh;
                if let Some(bimgs) = &mut bl.b_imgs {
                    bimgs[i] = b.expect("b present").mul(&bl.cols[i]);
                }
                let verified = norm2(&residual(bl, i, thetas[i]));
                if convergence_check(a_fro, verified, cfg.tol) {
                    converged[i] = true;
                }
            }
        }
        Ok(())
    };

    verify_flags(&mut xblock, &thetas, &mut converged, &mut counter)?;
    let first_unconverged = |c: &[bool]| c.iter().position(|&f| !f).unwrap_or(p - 1);
    {
        let t0 = first_unconverged(&converged);
        history.push(CycleRecord {
            cycle: 0,
            matvecs: counter.matvec_count,
            precond_applies: counter.precond_count,
            target_index: t0,
            rho: thetas[t0],
            resid_norm: norm2(&residual(&xblock, t0, thetas[t0])),
        });
    }

    if converged.iter().all(|&f| f) {
        status = SolveStatus::Converged;
    } else {
        for cycle in 1..=cfg.max_cycles {
            // Preconditioned residuals of the active columns.
            let mut sub = BlockColumns::empty(b.is_some());
            for i in 0..p {
                sub.push(
                    xblock.cols[i].clone(),
                    xblock.a_imgs[i].clone(),
                    xblock.b_imgs.as_ref().map(|bi| bi[i].clone()),
                );
            }
            let nx = sub.len();
            for i in 0..p {
                if converged[i] {
                    continue;
                }
                let r = residual(&xblock, i, thetas[i]);
                let w = match m_op {
                    Some(m) => m.apply(&r, &mut counter)?,
                    None => r,
                };
                let aw = a.spmv(&w, &mut counter)?;
                let bw = b.map(|bm| bm.mul(&w));
                sub.push(w, aw, bw);
            }
            if let Some(pr) = &prev {
                // Converged pairs keep their X column but contribute no
                // previous vector; it would duplicate the locked column.
                for i in 0..pr.len() {
                    if i < p && converged[i] {
                        continue;
                    }
                    sub.push(
                        pr.cols[i].clone(),
                        pr.a_imgs[i].clone(),
                        pr.b_imgs.as_ref().map(|bi| bi[i].clone()),
                    );
                }
            }

            let kept = sub.orthonormalize();
            if sub.len() < p {
                // Block collapse: reseed random columns.
                reseeds += 1;
                while sub.len() < p + 1 && sub.len() < n {
                    let mut w = random_vector(n, &mut rng);
                    let nrm = norm2(&w);
                    scale(1.0 / nrm, &mut w);
                    let aw = a.spmv(&w, &mut counter)?;
                    let bw = b.map(|bm| bm.mul(&w));
                    sub.push(w, aw, bw);
                }
                sub.orthonormalize();
                if sub.len() < p {
                    status = SolveStatus::Breakdown;
                    break;
                }
            }

            let eig = sub.rayleigh_ritz()?;
            let keep = p.min(eig.values.len());
            let coeffs: Vec<&[f64]> = eig.vectors[..keep].iter().map(|v| v.as_slice()).collect();
            let (cols, a_imgs, b_imgs) = sub.combine(&coeffs);

            // Previous block for the next iteration.
            prev = Some(if use_directions {
                // Implicit-difference variant: the combination restricted
                // to the non-X rows spans the search directions.
                let masked: Vec<Vec<f64>> = eig.vectors[..keep]
                    .iter()
                    .map(|y| {
                        let mut m = y.clone();
                        for (slot, v) in m.iter_mut().enumerate() {
                            // Zero the coefficients of surviving X columns.
                            if kept.get(slot).is_some_and(|&orig| orig < nx) {
                                *v = 0.0;
                            }
                        }
                        m
                    })
                    .collect();
                let mcoeffs: Vec<&[f64]> = masked.iter().map(|v| v.as_slice()).collect();
                let (dcols, da, db) = sub.combine(&mcoeffs);
                BlockColumns {
                    cols: dcols,
                    a_imgs: da,
                    b_imgs: db,
                }
            } else {
                BlockColumns {
                    cols: xblock.cols.clone(),
                    a_imgs: xblock.a_imgs.clone(),
                    b_imgs: xblock.b_imgs.clone(),
                }
            });

            xblock = BlockColumns {
                cols,
                a_imgs,
                b_imgs,
            };
            thetas = eig.values[..keep].to_vec();
            while thetas.len() < p {
                thetas.push(f64::INFINITY);
            }

            verify_flags(&mut xblock, &thetas, &mut converged, &mut counter)?;
            let t = first_unconverged(&converged);
            history.push(CycleRecord {
                cycle,
                matvecs: counter.matvec_count,
                precond_applies: counter.precond_count,
                target_index: t,
                rho: thetas[t],
                resid_norm: norm2(&residual(&xblock, t, thetas[t])),
            });
            if converged.iter().all(|&f| f) {
                status = SolveStatus::Converged;
                break;
            }
        }
    }

    let vectors: Vec<Vector> = xblock.cols[..p.min(xblock.len())].to_vec();
    let mut eigenvalues = Vec::with_capacity(vectors.len());
    let mut residual_norms = Vec::with_capacity(vectors.len());
    for xv in &vectors {
        let ax = a.mul(xv);
        let bx = b.map(|bm| bm.mul(xv));
        let bxr = bx.as_deref().unwrap_or(xv.as_slice());
        let theta = dot(xv, &ax) / dot(xv, bxr);
        let mut r = ax;
        axpy(-theta, bxr, &mut r);
        eigenvalues.push(theta);
        residual_norms.push(norm2(&r));
    }
    Ok(SolverReport {
        eigenvalues,
        eigenvectors: BasisBlock::from_columns(vectors),
        residual_norms,
        history,
        matvecs: counter.matvec_count,
        precond_applies: counter.precond_count,
        status,
        max_t_deviation: None,
        max_gram_deviation: None,
        max_conjugacy_defect: None,
        max_shifted_conjugacy_defect: None,
        reseeds,
    })
}
