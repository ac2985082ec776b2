//! Shared solver configuration, per-cycle history records, and the
//! report returned by every solver in this crate.

use crate::error::Error;
use crate::operators::PreconditionerSpec;
use crate::vec::BasisBlock;
use crate::Result;

/// Which end of the spectrum is targeted. Only the smallest eigenvalues
/// are supported; the enum exists so configurations are explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetSpectrum {
    #[default]
    Smallest,
}

/// Tunables shared by the restarted solvers.
///
/// Notation: `nev` eigenpairs are wanted, the basis grows to at most
/// `max_basis` columns, restarts keep `restart_size` Ritz vectors, and
/// `plus_k` Ritz vectors from the previous cycle are re-inserted. The
/// inner iteration therefore runs `max_basis - restart_size - plus_k`
/// steps per cycle.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nev: usize,
    pub max_basis: usize,
    pub restart_size: usize,
    pub plus_k: usize,
    /// Relative tolerance: a pair is converged when
    /// `‖A x - θ B x‖ ≤ ‖A‖_F · tol`.
    pub tol: f64,
    pub max_cycles: usize,
    pub seed: u64,
    pub precond: PreconditionerSpec,
    pub target: TargetSpectrum,
    /// Re-derive the projection matrix from scratch every cycle and track
    /// the worst deviation from the incrementally maintained one.
    pub debug_checks: bool,
    /// Column cap for the unrestarted Lanczos baseline.
    pub basis_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nev: 1,
            max_basis: 18,
            restart_size: 8,
            plus_k: 1,
            tol: 1e-14,
            max_cycles: 5000,
            seed: 12,
            precond: PreconditionerSpec::default(),
            target: TargetSpectrum::Smallest,
            debug_checks: false,
            basis_cap: 5000,
        }
    }
}

impl SolverConfig {
    pub fn with_nev(nev: usize) -> Self {
        Self {
            nev,
            ..Self::default()
        }
    }

    /// Validates the raw configuration and resolves it against the
    /// problem dimension. The basis cannot exceed `n`; when it must
    /// shrink, `plus_k` gives way before `restart_size`, and
    /// `restart_size` never drops below `nev`.
    pub fn resolve(&self, n: usize) -> Result<ResolvedConfig> {
        if self.nev == 0 {
            return Err(Error::InvalidConfig("nev must be at least 1".into()));
        }
        if self.nev > n {
            return Err(Error::InvalidConfig(format!(
                "nev = {} exceeds the matrix order {n}",
                self.nev
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.restart_size < self.nev {
            return Err(Error::InvalidConfig(format!(
                "restart_size = {} must be at least nev = {}",
                self.restart_size, self.nev
            )));
        }
        if self.restart_size + self.plus_k >= self.max_basis {
            return Err(Error::InvalidConfig(format!(
                "restart_size + plus_k = {} must stay below max_basis = {}",
                self.restart_size + self.plus_k,
                self.max_basis
            )));
        }
        let max_basis = self.max_basis.min(n);
        let mut restart_size = self.restart_size;
        let mut plus_k = self.plus_k;
        while restart_size + plus_k + 1 > max_basis {
            if plus_k > 0 {
                plus_k -= 1;
            } else if restart_size > self.nev {
                restart_size -= 1;
            } else {
                return Err(Error::InvalidConfig(format!(
                    "cannot fit nev = {} into a basis of {} columns",
                    self.nev, max_basis
                )));
            }
        }
        Ok(ResolvedConfig {
            nev: self.nev,
            max_basis,
            restart_size,
            plus_k,
            inner_steps: max_basis - restart_size - plus_k,
        })
    }
}

/// Configuration after clamping against the problem dimension.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedConfig {
    pub nev: usize,
    pub max_basis: usize,
    pub restart_size: usize,
    pub plus_k: usize,
    pub inner_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxCycles,
    Breakdown,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxCycles => "max_cycles",
            SolveStatus::Breakdown => "breakdown",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the per-cycle convergence history.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Cumulative A-applications at the end of the cycle.
    pub matvecs: u64,
    /// Cumulative preconditioner applications.
    pub precond_applies: u64,
    /// Index of the eigenpair being targeted (0-based).
    pub target_index: usize,
    /// Ritz value of the target after this cycle's projection.
    pub rho: f64,
    /// Euclidean norm of the target's eigenresidual.
    pub resid_norm: f64,
}

/// Result of a solve: converged (or best-effort) eigenpairs plus the
/// counters and per-cycle history.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: BasisBlock,
    pub residual_norms: Vec<f64>,
    pub history: Vec<CycleRecord>,
    pub matvecs: u64,
    pub precond_applies: u64,
    pub status: SolveStatus,
    /// Worst entrywise `|T - UᵀAU|` seen with `debug_checks` on.
    pub max_t_deviation: Option<f64>,
    /// Worst `|UᵀBU - I|` seen with `debug_checks` on.
    pub max_gram_deviation: Option<f64>,
    /// Largest `|p_{k-1}ᵀ(A - ρ_{k-1}B) p_k| / ‖A‖_F` over a pl1 solve
    /// (exact conjugacy holds at the previous shift by construction).
    pub max_conjugacy_defect: Option<f64>,
    /// Largest `|p_{k-1}ᵀ(A - ρ_k B) p_k| / ‖A‖_F` over a pl1 solve; the
    /// current-shift defect scales with the squared error angle.
    pub max_shifted_conjugacy_defect: Option<f64>,
    /// Random replacement columns injected after basis collapse.
    pub reseeds: u64,
}
