//! Mild solutions of the backward semilinear problem
//! `D_t v + Av = ψ(·, G∇v)`, `v(T,·) = φ`: the weighted-seminorm spaces, the
//! operator `Γ`, Picard fixed points on windows of the contraction length,
//! and continuation back to `t = 0`.

mod gamma;
mod mollify;

pub use mollify::{mollify, MollifierPair};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::funcs::BoundedFn;
use crate::semigroup::{CtEstimate, McConfig, SpatialSet, ValueSlice};

/// The Hamiltonian nonlinearity `ψ(x, z)` with its Lipschitz constant.
#[derive(Clone)]
pub struct HamiltonianSpec {
    eval: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    lipschitz: f64,
    label: String,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HamiltonianSpec({}, L={})", self.label, self.lipschitz)
    }
}

impl HamiltonianSpec {
    pub fn new(
        label: impl Into<String>,
        lipschitz: f64,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            lipschitz,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", 0.0, |_, _| 0.0)
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.eval)(x, z)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sampled check of the structural hypothesis: two-point quotients
    /// against `L_ψ|z−z'| + L_ψ|x−x'|(1+|z|+|z'|)` plus `|ψ(x,0)| ≤ L_ψ`.
    /// Returns (holds with the stored constant, smallest fitted constant).
    pub fn check_hypothesis(&self, dim: usize, radius: f64, samples: usize, seed: u64) -> (bool, f64) {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[0x115]);
        let mut fitted = 0.0f64;
        let zero = vec![0.0; dim];
        for _ in 0..samples {
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.random_range(-radius..radius)).collect()
            };
            let (x1, z1, x2, z2) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let dx = crate::linalg::norm(
                &x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let dz = crate::linalg::norm(
                &z1.iter().zip(&z2).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let lhs = (self.eval(&x1, &z1) - self.eval(&x2, &z2)).abs();
            let denom = dz + dx * (1.0 + crate::linalg::norm(&z1) + crate::linalg::norm(&z2));
            if denom > 1e-12 {
                fitted = fitted.max(lhs / denom);
            }
            fitted = fitted.max(self.eval(&x1, &zero).abs());
        }
        (fitted <= self.lipschitz * (1.0 + 1e-6), fitted)
    }
}

/// Solver knobs for the fixed-point machinery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative K-norm tolerance for Picard convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the theoretical contraction window actually used per
    /// continuation step; absorbs `C_T` measurement noise.
    pub window_factor: f64,
    /// Time-quadrature nodes per window (split across the two endpoint
    /// substitutions).
    pub quad_nodes: usize,
    /// Interior slice intervals per window.
    #[serde(default = "default_slice_intervals")]
    pub slice_intervals: usize,
    /// Budget for the embedded quadrature error estimate.
    #[serde(default = "default_quad_budget")]
    pub quad_budget: f64,
    /// CRN shift for the output weighted gradients.
    #[serde(default = "default_grad_step")]
    pub grad_step: f64,
}

fn default_slice_intervals() -> usize {
    4
}
fn default_quad_budget() -> f64 {
    1e-2
}
fn default_grad_step() -> f64 {
    1e-3
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 50,
            window_factor: 0.8,
            quad_nodes: 16,
            slice_intervals: default_slice_intervals(),
            quad_budget: default_quad_budget(),
            grad_step: default_grad_step(),
        }
    }
}

/// The slice times a window solve will use; handy for building custom
/// initial iterates.
pub fn window_grid(t_lo: f64, t_hi: f64, solver: &SolverConfig) -> Vec<f64> {
    gamma::window_slice_times(t_lo, t_hi, solver.slice_intervals)
}

/// Contraction window length from the fixed-point proof:
/// `δ = (4L_ψ + 2π C_T L_ψ)^{-2} ∧ T`.
pub fn contraction_window(l_psi: f64, c_t: f64, horizon: f64) -> f64 {
    if l_psi == 0.0 {
        return horizon;
    }
    (4.0 * l_psi + 2.0 * PI * c_t * l_psi).powi(-2).min(horizon)
}

/// Invariant ball radius `R = 2(1 + 2C_T)(‖φ‖∞ + δ L_ψ)`.
pub fn invariant_ball_radius(c_t: f64, sup_phi: f64, delta: f64, l_psi: f64) -> f64 {
    2.0 * (1.0 + 2.0 * c_t) * (sup_phi + delta * l_psi)
}

/// Per-window fixed-point provenance.
#[derive(Debug, Clone, Serialize)]
pub struct WindowStats {
    pub t_lo: f64,
    pub t_hi: f64,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub final_delta: f64,
    pub ball_radius: f64,
    pub max_knorm: f64,
    pub quad_error_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SolveStats {
    pub windows: Vec<WindowStats>,
    pub sup_norm: f64,
    pub seminorm: f64,
}

/// A time-sliced function of `K`-space type: value and weighted-gradient
/// fields on a shared spatial set, terminal slice at the horizon.
#[derive(Debug, Clone)]
pub struct MildSolution {
    pub horizon: f64,
    /// Ascending in `t`; the last slice sits at the horizon.
    pub slices: Vec<ValueSlice>,
    pub stats: SolveStats,
}

impl MildSolution {
    pub fn new(horizon: f64, slices: Vec<ValueSlice>) -> Self {
        let mut sol = Self {
            horizon,
            slices,
            stats: SolveStats::default(),
        };
        let (sup, semi) = knorm(&sol);
        sol.stats.sup_norm = sup;
        sol.stats.seminorm = semi;
        sol
    }

    pub fn t_lo(&self) -> f64 {
        self.slices.first().map(|s| s.t).unwrap_or(self.horizon)
    }

    pub fn points(&self) -> &SpatialSet {
        &self.slices[0].points
    }

    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.slices.len();
        if t <= self.slices[0].t {
            return (0, 0, 0.0);
        }
        if t >= self.slices[n - 1].t {
            return (n - 1, n - 1, 0.0);
        }
        let pos = self.slices.partition_point(|s| s.t <= t);
        let (i0, i1) = (pos - 1, pos);
        let w = (t - self.slices[i0].t) / (self.slices[i1].t - self.slices[i0].t);
        (i0, i1, w)
    }

    /// Linear-in-time interpolated value.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let (i0, i1, w) = self.bracket(t);
        (1.0 - w) * self.slices[i0].interp_value(x) + w * self.slices[i1].interp_value(x)
    }

    /// Linear-in-time interpolated weighted gradient; past the last
    /// gradient-carrying slice the latest one is reused (near-terminal
    /// convention).
    pub fn eval_wgrad(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let table = gamma::GradTable::new(&self.slices);
        let n = self.points().dim();
        let mut out = vec![0.0; n];
        table.wgrad_at(t, x, &mut out)?;
        Ok(out)
    }

    /// Sup norm over all slices.
    pub fn sup_norm(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.sup_value())
            .fold(0.0f64, f64::max)
    }

    /// Weighted seminorm `sup_j (T−t_j)^{1/2} sup_x |G∇v(t_j, x)|`; the
    /// terminal slice contributes zero (its weight vanishes).
    pub fn seminorm(&self) -> f64 {
        self.slices
            .iter()
            .filter(|s| s.t < self.horizon)
            .filter_map(|s| s.sup_wgrad().map(|g| (self.horizon - s.t).sqrt() * g))
            .fold(0.0f64, f64::max)
    }

    /// The weighted-gradient profile `t ↦ (T−t)^{1/2} sup_x |G∇v|`.
    pub fn seminorm_profile(&self) -> Vec<(f64, f64)> {
        self.slices
            .iter()
            .filter(|s| s.t < self.horizon)
            .filter_map(|s| {
                s.sup_wgrad()
                    .map(|g| (s.t, (self.horizon - s.t).sqrt() * g))
            })
            .collect()
    }
}

/// Both components of the K-norm: `(‖v‖∞, [v]_K)`.
pub fn knorm(v: &MildSolution) -> (f64, f64) {
    (v.sup_norm(), v.seminorm())
}

/// K-distance between two iterates on the same slice grid.
fn kdist(a: &[ValueSlice], b: &[ValueSlice], horizon: f64) -> f64 {
    let mut sup = 0.0f64;
    let mut semi = 0.0f64;
    for (sa, sb) in a.iter().zip(b) {
        for (va, vb) in sa.values.iter().zip(&sb.values) {
            sup = sup.max((va - vb).abs());
        }
        if sa.t < horizon {
            if let (Some(ga), Some(gb)) = (&sa.wgrad, &sb.wgrad) {
                let weight = (horizon - sa.t).sqrt();
                for (ra, rb) in ga.outer_iter().zip(gb.outer_iter()) {
                    let d: f64 = ra
                        .iter()
                        .zip(rb.iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    semi = semi.max(weight * d);
                }
            }
        }
    }
    sup + semi
}

/// Pointwise composition `F(t,v)(x) = ψ(x, G∇v(t,x))` on a slice's points.
pub fn apply_f(ham: &HamiltonianSpec, slice: &ValueSlice) -> Result<Vec<f64>> {
    let wg = slice
        .wgrad
        .as_ref()
        .ok_or(Error::MissingGradient { t: slice.t })?;
    Ok(slice
        .points
        .points()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z: Vec<f64> = wg.row(i).to_vec();
            ham.eval(x, &z)
        })
        .collect())
}

/// One application of `Γ` to an iterate defined on its own window and grid.
pub fn apply_gamma(
    v: &MildSolution,
    phi: &BoundedFn,
    ham: &HamiltonianSpec,
    field: &CoefficientField,
    mc: &McConfig,
    solver: &SolverConfig,
) -> Result<MildSolution> {
    let problem = gamma::WindowProblem {
        field,
        ham,
        terminal: phi,
        terminal_wgrad: v.slices.last().and_then(|s| s.wgrad.clone()),
        t_lo: v.t_lo(),
        t_hi: v.horizon,
        points: v.points(),
        slice_times: v.slices.iter().map(|s| s.t).collect(),
        mc,
        quad_nodes: solver.quad_nodes,
        h_grad: solver.grad_step,
        window_tag: 0,
    };
    let (slices, quad_est) = problem.apply(Some(&v.slices))?;
    if quad_est > solver.quad_budget {
        return Err(Error::Quadrature {
            estimate: quad_est,
            budget: solver.quad_budget,
        });
    }
    Ok(MildSolution::new(v.horizon, slices))
}

/// Picard-iterate `Γ` on one window until the K-norm of the update drops
/// below `tol` (relative). Seeds with the `ψ ≡ 0` image `S(T_w−t)φ_w`.
#[allow(clippy::too_many_arguments)]
fn solve_window(
    phi: &BoundedFn,
    terminal_wgrad: Option<ndarray::Array2<f64>>,
    ham: &HamiltonianSpec,
    field: &CoefficientField,
    window: (f64, f64),
    horizon: f64,
    points: &SpatialSet,
    mc: &McConfig,
    solver: &SolverConfig,
    c_t: f64,
    window_tag: u64,
    initial: Option<Vec<ValueSlice>>,
) -> Result<(Vec<ValueSlice>, WindowStats)> {
    let (t_lo, t_hi) = window;
    let delta = t_hi - t_lo;
    let delta_max = contraction_window(ham.lipschitz(), c_t, horizon);
    if delta > delta_max * (1.0 + 1e-9) {
        return Err(Error::Config {
            path: "window".into(),
            detail: format!(
                "window length {delta:.6} exceeds the contraction bound {delta_max:.6}"
            ),
        });
    }
    let problem = gamma::WindowProblem {
        field,
        ham,
        terminal: phi,
        terminal_wgrad,
        t_lo,
        t_hi,
        points,
        slice_times: gamma::window_slice_times(t_lo, t_hi, solver.slice_intervals),
        mc,
        quad_nodes: solver.quad_nodes,
        h_grad: solver.grad_step,
        window_tag,
    };
    let ball = invariant_ball_radius(c_t, phi.sup_bound(), delta, ham.lipschitz());

    let (mut current, _) = match initial {
        Some(slices) => (slices, 0.0),
        None => problem.apply(None)?,
    };
    let mut ratios = Vec::new();
    let mut last_delta = f64::INFINITY;
    let mut max_knorm: f64 = iterate_knorm(&current, horizon);
    let mut rising = 0usize;
    let mut quad_est_seen = 0.0f64;

    for iter in 0..solver.max_iter {
        let (next, quad_est) = problem.apply(Some(&current))?;
        quad_est_seen = quad_est_seen.max(quad_est);
        if quad_est > solver.quad_budget {
            return Err(Error::Quadrature {
                estimate: quad_est,
                budget: solver.quad_budget,
            });
        }
        let dist = kdist(&current, &next, horizon);
        let scale = iterate_knorm(&next, horizon).max(1.0);
        max_knorm = max_knorm.max(iterate_knorm(&next, horizon));
        if max_knorm > ball * (1.0 + 1e-9) {
            return Err(Error::NoContraction {
                ratio: max_knorm / ball,
                window_start: t_lo,
                window_end: t_hi,
            });
        }
        if last_delta.is_finite() && last_delta > solver.tol * scale * 0.01 {
            let ratio = dist / last_delta;
            ratios.push(ratio);
            if ratio >= 1.0 {
                rising += 1;
                if rising >= 2 {
                    return Err(Error::NoContraction {
                        ratio,
                        window_start: t_lo,
                        window_end: t_hi,
                    });
                }
            } else {
                rising = 0;
            }
        }
        current = next;
        last_delta = dist;
        if dist <= solver.tol * scale {
            let stats = WindowStats {
                t_lo,
                t_hi,
                iterations: iter + 1,
                contraction_ratios: ratios,
                final_delta: dist,
                ball_radius: ball,
                max_knorm,
                quad_error_estimate: quad_est_seen,
            };
            return Ok((current, stats));
        }
    }
    Err(Error::MaxIter {
        max_iter: solver.max_iter,
        last_delta,
    })
}

fn iterate_knorm(slices: &[ValueSlice], horizon: f64) -> f64 {
    let sup = slices.iter().map(|s| s.sup_value()).fold(0.0f64, f64::max);
    let semi = slices
        .iter()
        .filter(|s| s.t < horizon)
        .filter_map(|s| s.sup_wgrad().map(|g| (horizon - s.t).sqrt() * g))
        .fold(0.0f64, f64::max);
    sup + semi
}

/// Local fixed point on the window `(t_lo, T]` with terminal datum φ.
/// The window must respect the contraction bound computed from the measured
/// (inflated) `C_T` and `L_ψ`.
#[allow(clippy::too_many_arguments)]
pub fn local_fixed_point(
    phi: &BoundedFn,
    ham: &HamiltonianSpec,
    field: &CoefficientField,
    window: (f64, f64),
    points: &SpatialSet,
    mc: &McConfig,
    solver: &SolverConfig,
    ct: &CtEstimate,
) -> Result<MildSolution> {
    let horizon = window.1;
    let (slices, stats) = solve_window(
        phi,
        None,
        ham,
        field,
        window,
        horizon,
        points,
        mc,
        solver,
        ct.inflated(),
        0,
        None,
    )?;
    let mut sol = MildSolution::new(horizon, slices);
    sol.stats.windows.push(stats);
    Ok(sol)
}

/// Same entry point but seeded with a caller-provided initial iterate (used
/// by the uniqueness experiments, e.g. `v⁰ ≡ 0`).
#[allow(clippy::too_many_arguments)]
pub fn local_fixed_point_from(
    phi: &BoundedFn,
    ham: &HamiltonianSpec,
    field: &CoefficientField,
    window: (f64, f64),
    points: &SpatialSet,
    mc: &McConfig,
    solver: &SolverConfig,
    ct: &CtEstimate,
    initial: Vec<ValueSlice>,
) -> Result<MildSolution> {
    let horizon = window.1;
    let (slices, stats) = solve_window(
        phi,
        None,
        ham,
        field,
        window,
        horizon,
        points,
        mc,
        solver,
        ct.inflated(),
        0,
        Some(initial),
    )?;
    let mut sol = MildSolution::new(horizon, slices);
    sol.stats.windows.push(stats);
    Ok(sol)
}

/// March backward from `T` to `0` window by window, each window's initial
/// slice becoming the next window's terminal datum, and glue the slices.
#[allow(clippy::too_many_arguments)]
pub fn extend_to_full_interval(
    phi: &BoundedFn,
    ham: &HamiltonianSpec,
    field: &CoefficientField,
    horizon: f64,
    points: &SpatialSet,
    mc: &McConfig,
    solver: &SolverConfig,
    ct: &CtEstimate,
) -> Result<MildSolution> {
    let c_t = ct.inflated();
    let delta_max = contraction_window(ham.lipschitz(), c_t, horizon);
    let step = (solver.window_factor * delta_max).min(horizon).max(1e-9);

    let mut all_slices: Vec<ValueSlice> = Vec::new();
    let mut window_stats = Vec::new();
    let mut t_hi = horizon;
    let mut terminal: BoundedFn = phi.clone();
    let mut terminal_wgrad: Option<ndarray::Array2<f64>> = None;
    let mut window_tag = 0u64;

    while t_hi > 1e-12 {
        let t_lo = (t_hi - step).max(0.0);
        let result = solve_window(
            &terminal,
            terminal_wgrad.clone(),
            ham,
            field,
            (t_lo, t_hi),
            horizon,
            points,
            mc,
            solver,
            c_t,
            window_tag,
            None,
        );
        let (slices, stats) = match result {
            Ok(ok) => ok,
            Err(e) => {
                let profile: Vec<(f64, f64)> = all_slices
                    .iter()
                    .filter(|s| s.t < horizon)
                    .filter_map(|s| {
                        s.sup_wgrad().map(|g| (s.t, (horizon - s.t).sqrt() * g))
                    })
                    .collect();
                return Err(Error::Continuation {
                    window_start: t_lo,
                    window_end: t_hi,
                    detail: e.to_string(),
                    profile,
                });
            }
        };
        window_stats.push(stats);

        // The seam slice (this window's earliest) feeds the next window both
        // as terminal datum and as terminal gradient.
        let seam = slices[0].clone();
        let mut merged = slices;
        if !all_slices.is_empty() {
            // This window's terminal slice duplicates the seam already glued.
            merged.pop();
        }
        merged.extend(all_slices);
        all_slices = merged;

        if t_lo <= 1e-12 {
            break;
        }
        let seam_arc = Arc::new(seam.clone());
        let sup = seam.sup_value();
        terminal = BoundedFn::new(
            format!("v({:.4},·)", seam.t),
            sup,
            move |x: &[f64]| seam_arc.interp_value(x),
        );
        terminal_wgrad = seam.wgrad.clone();
        t_hi = t_lo;
        window_tag += 1;
    }

    let mut sol = MildSolution::new(horizon, all_slices);
    sol.stats.windows = window_stats;
    Ok(sol)
}
