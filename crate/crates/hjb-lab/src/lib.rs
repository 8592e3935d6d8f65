//! Monte Carlo laboratory for semilinear parabolic HJB equations with
//! unbounded coefficients.
//!
//! The crate is organised around one pipeline:
//!
//! 1. [`coefficients`] — diffusion/drift coefficient fields `Q`, `G = √Q`, `B`
//!    with their derivatives, the polynomial example family, the smooth radial
//!    cutoff, and a sampling-based verifier of the structural hypotheses
//!    (ellipticity, dissipativity, growth balance).
//! 2. [`semigroup`] — the linear solution operator `S(t)φ(x) = E φ(X_t^x)`
//!    evaluated by Feynman–Kac Monte Carlo, its weighted gradient `G∇S(t)φ`
//!    via common-random-number central differences, the empirical gradient
//!    constant `C_T`, and a finite-difference Dirichlet reference solver.
//! 3. [`mild`] — the weighted-seminorm function spaces, the integral operator
//!    `Γv = S(T-t)φ - ∫_t^T S(r-t) ψ(·, G∇v(r,·)) dr`, Picard fixed points on
//!    windows of the contraction length, continuation to `[0,T]`, and the
//!    mollified approximating problems.
//! 4. [`fbsde`] — identification of `(Y, Z) = (v(t,X), G∇v(t,X))` along
//!    forward paths, residual/martingale diagnostics, and an independent
//!    least-squares regression backward solver used as a cross-check.
//! 5. [`control`] — the stochastic optimal control layer: Hamiltonian argmin,
//!    feedback selector, closed-loop simulation, brute-force policy sampling
//!    against the value function, and Girsanov reweighting.
//! 6. [`harness`] — configuration files, scenario orchestration, CSV/JSON
//!    emission and reproducibility manifests.
//!
//! Everything is deterministic given a master seed: each Monte Carlo job
//! derives an independent counter-based RNG stream, so the parallelism degree
//! never changes numeric output.

pub mod coefficients;
pub mod control;
pub mod error;
pub mod fbsde;
pub mod funcs;
pub mod harness;
pub mod linalg;
pub mod mild;
pub mod rng;
pub mod sampling;
pub mod semigroup;

pub use error::{Error, Result};
