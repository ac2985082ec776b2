//! Sparse symmetric eigensolvers for computing a few of the smallest
//! eigenpairs of `A x = λ B x` with `B` symmetric positive definite
//! (or absent, for the standard problem).
//!
//! The main solver is a thick-restart preconditioned Lanczos method with
//! locally optimal (+K) restarting ([`trplk::trplk_solve`]). It runs an
//! inner Lanczos recurrence on a projected preconditioned operator,
//! maintains the small projection matrix incrementally, and restarts with
//! the best Ritz vectors plus a handful of Ritz vectors from the previous
//! cycle. Reference solvers (unrestarted Lanczos, thick-restart Lanczos,
//! LOBPCG) live in [`baselines`], and a single-vector pencil solver with
//! step-size/conjugacy/quasi-optimality diagnostics in [`pl1`].

pub mod baselines;
pub mod dense;
pub mod error;
pub mod market;
pub mod operators;
pub mod pl1;
pub mod rng;
pub mod solver;
pub mod sparse;
pub mod trplk;
pub mod vec;

pub use error::Error;
pub use solver::{CycleRecord, SolveStatus, SolverConfig, SolverReport};
pub use sparse::{MatvecCounter, SparseSymMatrix, Vector};
pub use vec::BasisBlock;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
