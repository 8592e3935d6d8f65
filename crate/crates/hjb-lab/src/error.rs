//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Example-family parameters violate the admissibility inequalities.
    #[error("inadmissible coefficient parameters: {0}")]
    Admissibility(String),

    /// `G(x)` is numerically singular at an evaluation point.
    #[error("diffusion matrix numerically singular at {point:?} (cond = {cond:.3e})")]
    SingularDiffusion { point: Vec<f64>, cond: f64 },

    /// A simulated path escaped the guard radius; the step size is too large
    /// for the drift growth.
    #[error("path {path} exceeded guard radius {guard} at step {step} (|x| = {norm:.3e})")]
    Blowup {
        path: usize,
        step: usize,
        norm: f64,
        guard: f64,
    },

    /// Finite-difference step below the Monte Carlo noise floor.
    #[error("finite-difference step {step:.3e} below MC noise floor: noise {noise:.3e} exceeds signal bound {bound:.3e}")]
    StepTooSmall { step: f64, noise: f64, bound: f64 },

    /// The implicit finite-difference solver failed to converge.
    #[error("finite-difference scheme unstable: {0}")]
    Stability(String),

    /// Operation restricted to low dimension.
    #[error("dimension {dim} unsupported here (max {max})")]
    Dimension { dim: usize, max: usize },

    /// Time-quadrature error estimate exceeded its budget.
    #[error("quadrature error estimate {estimate:.3e} exceeds budget {budget:.3e}")]
    Quadrature { estimate: f64, budget: f64 },

    /// Picard iteration stopped contracting.
    #[error("no contraction on window [{window_start:.4}, {window_end:.4}]: ratio {ratio:.3} >= 1 twice")]
    NoContraction {
        ratio: f64,
        window_start: f64,
        window_end: f64,
    },

    /// Picard iteration exhausted its budget.
    #[error("fixed-point iteration did not converge in {max_iter} iterations (last delta {last_delta:.3e})")]
    MaxIter { max_iter: usize, last_delta: f64 },

    /// Window-by-window continuation failed; carries the weighted-gradient
    /// profile observed so far for blow-up diagnosis.
    #[error("continuation failed on window [{window_start:.4}, {window_end:.4}]: {detail}")]
    Continuation {
        window_start: f64,
        window_end: f64,
        detail: String,
        profile: Vec<(f64, f64)>,
    },

    /// A slice lacks weighted-gradient data.
    #[error("value slice at t = {t} carries no weighted gradient")]
    MissingGradient { t: f64 },

    /// Too many path states left the spatial evaluation hull.
    #[error("{fraction:.4} of path states left the evaluation hull (allowed {allowed:.4})")]
    Extrapolation { fraction: f64, allowed: f64 },

    /// Regression basis Gram matrix is ill-conditioned.
    #[error("regression basis ill-conditioned: cond = {cond:.3e} (threshold {threshold:.3e})")]
    IllConditionedBasis { cond: f64, threshold: f64 },

    /// Girsanov weights collapsed.
    #[error("degenerate importance weights: effective sample size {ess:.1} below {required:.1}")]
    DegenerateWeights { ess: f64, required: f64 },

    /// Configuration file invalid; `path` names the offending field.
    #[error("config error at `{path}`: {detail}")]
    Config { path: String, detail: String },

    /// No report files found for plot emission.
    #[error("no report files found in {dir}")]
    MissingReport { dir: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
