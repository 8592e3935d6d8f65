//! The linear semigroup `S(t)φ(x) = E φ(X_t^x)` of the operator `A`,
//! evaluated by Feynman–Kac Monte Carlo over Euler–Maruyama paths, together
//! with its weighted gradient `G∇S(t)φ` (common-random-number central
//! differences) and the empirical gradient constant `C_T`.

mod fd;
mod space;

pub use fd::{fd_reference_solve, FdGridConfig};
pub use space::SpatialSet;

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::funcs::BoundedFn;
use crate::linalg::norm;
use crate::rng;
use crate::sampling::RunningStats;

/// RNG tag for forward ensembles.
const TAG_FORWARD: u64 = 0x10;
/// RNG tag for streaming semigroup evaluation.
const TAG_SEMIGROUP: u64 = 0x20;
/// RNG tag for gradient evaluation.
const TAG_GRADIENT: u64 = 0x30;

/// Time-stepping scheme for the forward SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    /// Drift increment damped as `BΔt / (1 + Δt|B|)`; keeps superlinear
    /// drifts (example family with p ≥ 1) from exploding.
    TamedEuler,
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub guard_radius: f64,
    pub scheme: Scheme,
    /// Spatial step for gradient central differences; auto-tuned when absent.
    #[serde(default)]
    pub fd_step: Option<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 10_000,
            dt: 1e-2,
            seed: 42,
            guard_radius: 100.0,
            scheme: Scheme::Euler,
            fd_step: None,
        }
    }
}

/// Fallback floor for the auto-tuned central-difference step.
pub const FD_STEP_MIN: f64 = 1e-4;
/// Coefficient in the auto-tuning rule `h = max(h_min, c · SE^{1/3})`.
pub const FD_STEP_COEFF: f64 = 0.1;

/// Euler–Maruyama forward paths with retained Brownian increments.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub start: Vec<f64>,
    /// `t_0 < … < t_K`.
    pub grid: Vec<f64>,
    /// `M × (K+1) × N` states.
    pub paths: Array3<f64>,
    /// `M × K × N` Brownian increments.
    pub increments: Array3<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.shape()[0]
    }

    pub fn n_steps(&self) -> usize {
        self.increments.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.paths.shape()[2]
    }

    pub fn state(&self, path: usize, step: usize) -> Vec<f64> {
        self.paths
            .index_axis(Axis(0), path)
            .index_axis(Axis(0), step)
            .to_vec()
    }

    /// Statistical sanity of the retained increments: per-step sample mean
    /// within `nsigma` standard errors of 0 and sample variance within
    /// `nsigma` standard errors of `Δt` (cross-covariances near 0).
    pub fn increments_consistent(&self, nsigma: f64) -> bool {
        let m = self.n_paths() as f64;
        for k in 0..self.n_steps() {
            let dt = self.grid[k + 1] - self.grid[k];
            for d in 0..self.dim() {
                let col = self.increments.slice(ndarray::s![.., k, d]);
                let mean = col.mean().unwrap();
                if mean.abs() > nsigma * (dt / m).sqrt() {
                    return false;
                }
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
                if (var - dt).abs() > nsigma * dt * (2.0 / (m - 1.0)).sqrt() {
                    return false;
                }
            }
        }
        true
    }
}

/// One Euler–Maruyama step in place; `dw` holds the Brownian increment.
pub(crate) fn em_step(
    field: &CoefficientField,
    state: &mut [f64],
    dt: f64,
    dw: &[f64],
    scheme: Scheme,
) {
    let b = field.drift(state);
    let g = field.g(state);
    let n = state.len();
    let damp = match scheme {
        Scheme::Euler => 1.0,
        Scheme::TamedEuler => 1.0 / (1.0 + dt * b.norm()),
    };
    for i in 0..n {
        let mut diff = 0.0;
        for j in 0..n {
            diff += g[(i, j)] * dw[j];
        }
        state[i] += b[i] * dt * damp + diff;
    }
}

/// Draw one vector of Brownian increments for step size `dt`.
pub(crate) fn draw_increment(rng: &mut ChaCha12Rng, dim: usize, dt: f64, out: &mut [f64]) {
    let sq = dt.sqrt();
    for d in 0..dim {
        out[d] = sq * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Simulate `m_paths` forward paths from `x0` over `grid`, retaining states
/// and increments. Deterministic given the seed, independent of thread count.
pub fn simulate_forward(
    field: &CoefficientField,
    x0: &[f64],
    grid: &[f64],
    m_paths: usize,
    mc: &McConfig,
) -> Result<PathEnsemble> {
    validate_grid(grid)?;
    if m_paths == 0 {
        return Err(Error::Config {
            path: "paths".into(),
            detail: "need at least one path".into(),
        });
    }
    let n = field.dim();
    let k_steps = grid.len() - 1;
    let mut paths = Array3::zeros((m_paths, k_steps + 1, n));
    let mut increments = Array3::zeros((m_paths, k_steps, n));
    let guard = mc.guard_radius;

    let status = paths
        .outer_iter_mut()
        .into_par_iter()
        .zip(increments.outer_iter_mut().into_par_iter())
        .enumerate()
        .map(|(pi, (mut prow, mut irow))| -> Result<()> {
            let mut rng = rng::stream(mc.seed, &[TAG_FORWARD, pi as u64]);
            let mut state = x0.to_vec();
            let mut dw = vec![0.0; n];
            for d in 0..n {
                prow[(0, d)] = state[d];
            }
            for k in 0..k_steps {
                let dt = grid[k + 1] - grid[k];
                draw_increment(&mut rng, n, dt, &mut dw);
                em_step(field, &mut state, dt, &dw, mc.scheme);
                let r = norm(&state);
                if r > guard {
                    return Err(Error::Blowup {
                        path: pi,
                        step: k + 1,
                        norm: r,
                        guard,
                    });
                }
                for d in 0..n {
                    irow[(k, d)] = dw[d];
                    prow[(k + 1, d)] = state[d];
                }
            }
            Ok(())
        })
        .reduce(|| Ok(()), |a, b| a.and(b));
    status?;

    Ok(PathEnsemble {
        start: x0.to_vec(),
        grid: grid.to_vec(),
        paths,
        increments,
        seed: mc.seed,
        scheme: mc.scheme,
    })
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config {
            path: "grid".into(),
            detail: "time grid must be strictly increasing with >= 2 nodes".into(),
        });
    }
    Ok(())
}

/// Values of a time slice on an evaluation set, with Monte Carlo standard
/// errors and optionally the weighted gradient field.
#[derive(Debug, Clone)]
pub struct ValueSlice {
    pub t: f64,
    pub points: SpatialSet,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    /// `points × N` weighted gradient `G∇v`.
    pub wgrad: Option<Array2<f64>>,
    pub wgrad_se: Option<Array2<f64>>,
}

impl ValueSlice {
    pub fn interp_value(&self, x: &[f64]) -> f64 {
        self.points.interpolate(&self.values, x)
    }

    /// Interpolated weighted gradient; errors when the slice carries none.
    pub fn interp_wgrad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let wg = self.wgrad.as_ref().ok_or(Error::MissingGradient { t: self.t })?;
        let n = wg.shape()[1];
        Ok((0..n)
            .map(|d| {
                let col: Vec<f64> = wg.column(d).to_vec();
                self.points.interpolate(&col, x)
            })
            .collect())
    }

    /// Sup of |values| over the slice.
    pub fn sup_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Sup of the euclidean norm of the weighted gradient over the slice.
    pub fn sup_wgrad(&self) -> Option<f64> {
        self.wgrad.as_ref().map(|wg| {
            wg.outer_iter()
                .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max)
        })
    }
}

fn uniform_steps(t: f64, dt: f64) -> usize {
    ((t / dt).ceil() as usize).max(1)
}

/// Evaluate `S(t)φ` on `points`. At `t = 0` this is φ exactly; for `t > 0`
/// each point runs an independent streaming Monte Carlo.
pub fn apply_semigroup(
    field: &CoefficientField,
    phi: &BoundedFn,
    t: f64,
    points: &SpatialSet,
    mc: &McConfig,
) -> Result<ValueSlice> {
    if t < 0.0 {
        return Err(Error::Config {
            path: "t".into(),
            detail: "time must be nonnegative".into(),
        });
    }
    let pts = points.points();
    if t == 0.0 {
        let values: Vec<f64> = pts.iter().map(|p| phi.eval(p)).collect();
        let se = vec![0.0; values.len()];
        return Ok(ValueSlice {
            t,
            points: points.clone(),
            values,
            se,
            wgrad: None,
            wgrad_se: None,
        });
    }
    let n = field.dim();
    let steps = uniform_steps(t, mc.dt);
    let dt = t / steps as f64;
    let results: Result<Vec<(f64, f64)>> = pts
        .par_iter()
        .enumerate()
        .map(|(pi, x)| -> Result<(f64, f64)> {
            let mut stats = RunningStats::new();
            let mut dw = vec![0.0; n];
            for m in 0..mc.paths {
                let mut rng = rng::stream(mc.seed, &[TAG_SEMIGROUP, pi as u64, m as u64]);
                let mut state = x.clone();
                for k in 0..steps {
                    draw_increment(&mut rng, n, dt, &mut dw);
                    em_step(field, &mut state, dt, &dw, mc.scheme);
                    let r = norm(&state);
                    if r > mc.guard_radius {
                        return Err(Error::Blowup {
                            path: m,
                            step: k + 1,
                            norm: r,
                            guard: mc.guard_radius,
                        });
                    }
                }
                stats.push(phi.eval(&state));
            }
            Ok((stats.mean(), stats.se()))
        })
        .collect();
    let results = results?;
    Ok(ValueSlice {
        t,
        points: points.clone(),
        values: results.iter().map(|r| r.0).collect(),
        se: results.iter().map(|r| r.1).collect(),
        wgrad: None,
        wgrad_se: None,
    })
}

/// Estimate `∇S(t)φ` by central differences of the Monte Carlo estimator
/// under common random numbers (identical increments for `x ± h e_i`), then
/// left-multiply by `G(x)`. Returns a slice carrying values, weighted
/// gradients and their standard errors.
pub fn weighted_gradient(
    field: &CoefficientField,
    phi: &BoundedFn,
    t: f64,
    points: &SpatialSet,
    mc: &McConfig,
) -> Result<ValueSlice> {
    if t <= 0.0 {
        return Err(Error::Config {
            path: "t".into(),
            detail: "weighted gradient needs t > 0".into(),
        });
    }
    let n = field.dim();
    let steps = uniform_steps(t, mc.dt);
    let dt = t / steps as f64;
    let pts = points.points();
    let n_pts = pts.len();

    let per_point: Result<Vec<(f64, f64, Vec<f64>, Vec<f64>)>> = pts
        .par_iter()
        .enumerate()
        .map(|(pi, x)| -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
            let h = fd_step_for(field, phi, x, t, dt, steps, pi, mc)?;
            // 2N + 1 state clones driven by one increment stream per path.
            let mut value_stats = RunningStats::new();
            let mut quot_stats: Vec<RunningStats> = vec![RunningStats::new(); n];
            let mut dw = vec![0.0; n];
            let mut states: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 1);
            for m in 0..mc.paths {
                let mut rng = rng::stream(mc.seed, &[TAG_GRADIENT, pi as u64, m as u64]);
                states.clear();
                states.push(x.clone());
                for i in 0..n {
                    let mut xp = x.clone();
                    xp[i] += h;
                    states.push(xp);
                    let mut xm = x.clone();
                    xm[i] -= h;
                    states.push(xm);
                }
                for k in 0..steps {
                    draw_increment(&mut rng, n, dt, &mut dw);
                    for s in states.iter_mut() {
                        em_step(field, s, dt, &dw, mc.scheme);
                        let r = norm(s);
                        if r > mc.guard_radius {
                            return Err(Error::Blowup {
                                path: m,
                                step: k + 1,
                                norm: r,
                                guard: mc.guard_radius,
                            });
                        }
                    }
                }
                value_stats.push(phi.eval(&states[0]));
                for i in 0..n {
                    let up = phi.eval(&states[1 + 2 * i]);
                    let dn = phi.eval(&states[2 + 2 * i]);
                    quot_stats[i].push((up - dn) / (2.0 * h));
                }
            }
            let g = field.g(x);
            let mut wgrad = vec![0.0; n];
            let mut wse = vec![0.0; n];
            for j in 0..n {
                let mut acc = 0.0;
                let mut var = 0.0;
                for i in 0..n {
                    acc += g[(j, i)] * quot_stats[i].mean();
                    var += (g[(j, i)] * quot_stats[i].se()).powi(2);
                }
                wgrad[j] = acc;
                wse[j] = var.sqrt();
            }
            // Noise floor check: the gradient must be resolvable against the
            // theoretical scale ‖φ‖∞ (1 + t^{-1/2}) ‖G‖.
            let noise = wse.iter().cloned().fold(0.0f64, f64::max);
            let bound = phi.sup_bound().max(1e-12)
                * (1.0 + t.powf(-0.5))
                * (1.0 + crate::linalg::frobenius(&g));
            if noise > bound {
                return Err(Error::StepTooSmall {
                    step: h,
                    noise,
                    bound,
                });
            }
            Ok((value_stats.mean(), value_stats.se(), wgrad, wse))
        })
        .collect();
    let per_point = per_point?;

    let mut wgrad = Array2::zeros((n_pts, n));
    let mut wgrad_se = Array2::zeros((n_pts, n));
    let mut values = Vec::with_capacity(n_pts);
    let mut se = Vec::with_capacity(n_pts);
    for (pi, (v, s, wg, ws)) in per_point.into_iter().enumerate() {
        values.push(v);
        se.push(s);
        for d in 0..n {
            wgrad[(pi, d)] = wg[d];
            wgrad_se[(pi, d)] = ws[d];
        }
    }
    Ok(ValueSlice {
        t,
        points: points.clone(),
        values,
        se,
        wgrad: Some(wgrad),
        wgrad_se: Some(wgrad_se),
    })
}

/// Central-difference step: explicit override, or the tuning rule
/// `h = max(h_min, c · SE^{1/3})` with SE taken from a small pilot run.
fn fd_step_for(
    field: &CoefficientField,
    phi: &BoundedFn,
    x: &[f64],
    _t: f64,
    dt: f64,
    steps: usize,
    point_idx: usize,
    mc: &McConfig,
) -> Result<f64> {
    if let Some(h) = mc.fd_step {
        return Ok(h);
    }
    let n = field.dim();
    let pilot = (mc.paths / 50).clamp(64, 512);
    let mut stats = RunningStats::new();
    let mut dw = vec![0.0; n];
    for m in 0..pilot {
        let mut rng = rng::stream(mc.seed, &[TAG_GRADIENT, point_idx as u64, m as u64]);
        let mut state = x.to_vec();
        for _ in 0..steps {
            draw_increment(&mut rng, n, dt, &mut dw);
            em_step(field, &mut state, dt, &dw, mc.scheme);
        }
        stats.push(phi.eval(&state));
    }
    let se_full = stats.std_dev() / (mc.paths as f64).sqrt();
    Ok((FD_STEP_COEFF * se_full.powf(1.0 / 3.0)).max(FD_STEP_MIN))
}

/// Per-time entry of the empirical gradient profile.
#[derive(Debug, Clone, Serialize)]
pub struct CtPoint {
    pub t: f64,
    /// `sup_x |G∇S(t)φ| / ‖φ‖∞`, maximised over the φ set.
    pub sup_wgrad: f64,
    /// `t^{1/2}` times the above.
    pub weighted: f64,
}

/// Empirical estimate of `C_T = sup_t t^{1/2} ‖G∇S(t)‖` over a finite φ set,
/// a time grid and an evaluation domain.
#[derive(Debug, Clone, Serialize)]
pub struct CtEstimate {
    pub c_t: f64,
    pub horizon: f64,
    pub profile: Vec<CtPoint>,
    pub phi_labels: Vec<String>,
}

impl CtEstimate {
    /// The value downstream formulas should use: measured sup inflated by 10%
    /// to absorb measurement noise.
    pub fn inflated(&self) -> f64 {
        self.c_t * 1.1
    }
}

/// Measure the gradient-constant profile; `t_grid ⊂ (0, T]`.
pub fn estimate_ct(
    field: &CoefficientField,
    phi_set: &[BoundedFn],
    horizon: f64,
    t_grid: &[f64],
    domain: &SpatialSet,
    mc: &McConfig,
) -> Result<CtEstimate> {
    if phi_set.is_empty() {
        return Err(Error::Config {
            path: "phi_set".into(),
            detail: "need at least one test function".into(),
        });
    }
    if t_grid.iter().any(|&t| t <= 0.0 || t > horizon) {
        return Err(Error::Config {
            path: "t_grid".into(),
            detail: "t grid must lie in (0, T]".into(),
        });
    }
    let mut profile = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let mut sup = 0.0f64;
        for (fi, phi) in phi_set.iter().enumerate() {
            let mut cfg = mc.clone();
            cfg.seed = rng::derive_seed(mc.seed, &[0xc7, ti as u64, fi as u64]);
            let slice = weighted_gradient(field, phi, t, domain, &cfg)?;
            let s = slice.sup_wgrad().unwrap_or(0.0) / phi.sup_bound().max(1e-12);
            sup = sup.max(s);
        }
        profile.push(CtPoint {
            t,
            sup_wgrad: sup,
            weighted: t.sqrt() * sup,
        });
    }
    let c_t = profile.iter().map(|p| p.weighted).fold(0.0f64, f64::max);
    Ok(CtEstimate {
        c_t,
        horizon,
        profile,
        phi_labels: phi_set.iter().map(|p| p.label().to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ou() -> CoefficientField {
        CoefficientField::ornstein_uhlenbeck(1)
    }

    /// Closed-form OU facts for φ = cos: X_t ~ N(x e^{-t}, (1-e^{-2t})/2),
    /// so S(t)cos(x) = cos(x e^{-t}) exp(-(1-e^{-2t})/4).
    fn ou_cos_exact(x: f64, t: f64) -> f64 {
        (x * (-t).exp()).cos() * (-(1.0 - (-2.0 * t).exp()) / 4.0).exp()
    }

    fn ou_cos_grad_exact(x: f64, t: f64) -> f64 {
        -(x * (-t).exp()).sin() * (-t).exp() * (-(1.0 - (-2.0 * t).exp()) / 4.0).exp()
    }

    #[test]
    fn driftless_single_step_paths_are_increments() {
        let field = CoefficientField::brownian(2);
        let mc = McConfig {
            paths: 50,
            ..Default::default()
        };
        let ens = simulate_forward(&field, &[0.0, 0.0], &[0.0, 0.25], 50, &mc).unwrap();
        for m in 0..50 {
            for d in 0..2 {
                assert_eq!(ens.paths[(m, 1, d)], ens.increments[(m, 0, d)]);
            }
        }
    }

    #[test]
    fn ou_terminal_mean_matches_closed_form() {
        let field = ou();
        let mc = McConfig {
            paths: 20_000,
            dt: 5e-3,
            ..Default::default()
        };
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 5e-3).collect();
        let ens = simulate_forward(&field, &[1.0], &grid, 20_000, &mc).unwrap();
        let mut stats = RunningStats::new();
        for m in 0..ens.n_paths() {
            stats.push(ens.paths[(m, 200, 0)]);
        }
        let exact = (-1.0f64).exp();
        let tol = 3.0 * stats.se() + 5e-3; // MC band plus Euler bias allowance
        assert!(
            (stats.mean() - exact).abs() < tol,
            "mean {} vs {} (tol {})",
            stats.mean(),
            exact,
            tol
        );
        assert!(ens.increments_consistent(4.0));
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let field = ou();
        let mc = McConfig {
            paths: 64,
            ..Default::default()
        };
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let a = simulate_forward(&field, &[1.0], &grid, 64, &mc).unwrap();
        let b = simulate_forward(&field, &[1.0], &grid, 64, &mc).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.increments, b.increments);
    }

    #[test]
    fn blowup_guard_fires_for_coarse_steps() {
        // Superlinear drift with plain Euler and a huge step explodes.
        let field = crate::coefficients::make_example_family(
            &crate::coefficients::ExampleFamilyParams::isotropic(1, 0.4, 1.0, 1.0),
        )
        .unwrap();
        let mc = McConfig {
            paths: 8,
            dt: 0.5,
            guard_radius: 50.0,
            scheme: Scheme::Euler,
            ..Default::default()
        };
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let err = simulate_forward(&field, &[3.0], &grid, 8, &mc).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
        // The tamed scheme survives the same configuration.
        let tamed = McConfig {
            scheme: Scheme::TamedEuler,
            ..mc
        };
        assert!(simulate_forward(&field, &[3.0], &grid, 8, &tamed).is_ok());
    }

    #[test]
    fn constant_datum_is_zero_variance() {
        let field = ou();
        let phi = BoundedFn::constant(1.0);
        let pts = SpatialSet::uniform_1d(-1.0, 1.0, 5);
        let mc = McConfig {
            paths: 200,
            ..Default::default()
        };
        let slice = apply_semigroup(&field, &phi, 0.7, &pts, &mc).unwrap();
        for (v, s) in slice.values.iter().zip(&slice.se) {
            assert_eq!(*v, 1.0);
            assert_eq!(*s, 0.0);
        }
    }

    #[test]
    fn time_zero_returns_datum_exactly() {
        let field = ou();
        let phi = BoundedFn::cosine();
        let pts = SpatialSet::uniform_1d(-2.0, 2.0, 9);
        let slice = apply_semigroup(&field, &phi, 0.0, &pts, &McConfig::default()).unwrap();
        for (i, p) in pts.points().iter().enumerate() {
            assert_eq!(slice.values[i], p[0].cos());
            assert_eq!(slice.se[i], 0.0);
        }
    }

    #[test]
    fn ou_cos_value_matches_closed_form() {
        let field = ou();
        let phi = BoundedFn::cosine();
        let pts = SpatialSet::Grid1d { xs: vec![0.0] };
        let mc = McConfig {
            paths: 20_000,
            dt: 2e-3,
            ..Default::default()
        };
        let slice = apply_semigroup(&field, &phi, 0.5, &pts, &mc).unwrap();
        let exact = ou_cos_exact(0.0, 0.5);
        assert_relative_eq!(exact, 0.853821, epsilon = 1e-5);
        let tol = (3.0 * slice.se[0]).max(5e-3);
        assert!(
            (slice.values[0] - exact).abs() < tol,
            "got {} want {exact}",
            slice.values[0]
        );
    }

    #[test]
    fn ou_weighted_gradient_matches_closed_form() {
        let field = ou();
        let phi = BoundedFn::cosine();
        // x e^{-t} = π/2 puts the gradient at its extremum.
        let t: f64 = 0.5;
        let x = std::f64::consts::FRAC_PI_2 * t.exp();
        let pts = SpatialSet::Grid1d { xs: vec![x] };
        let mc = McConfig {
            paths: 20_000,
            dt: 2e-3,
            ..Default::default()
        };
        let slice = weighted_gradient(&field, &phi, t, &pts, &mc).unwrap();
        let exact = ou_cos_grad_exact(x, t);
        assert_relative_eq!(exact, -0.51788, epsilon = 1e-4);
        let wg = slice.wgrad.as_ref().unwrap();
        let tol = (3.0 * slice.wgrad_se.as_ref().unwrap()[(0, 0)]).max(1e-2);
        assert!(
            (wg[(0, 0)] - exact).abs() < tol,
            "got {} want {exact} (tol {tol})",
            wg[(0, 0)]
        );
    }

    #[test]
    fn constant_datum_has_zero_gradient() {
        let field = ou();
        let phi = BoundedFn::constant(2.5);
        let pts = SpatialSet::uniform_1d(-1.0, 1.0, 3);
        let mc = McConfig {
            paths: 500,
            ..Default::default()
        };
        let slice = weighted_gradient(&field, &phi, 0.3, &pts, &mc).unwrap();
        let wg = slice.wgrad.as_ref().unwrap();
        assert!(wg.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn smooth_bounded_datum_has_no_small_t_blowup() {
        // tanh is C¹ with bounded derivative: the weighted gradient stays
        // bounded as t ↓ 0 instead of growing like t^{-1/2}.
        let field = ou();
        let phi = BoundedFn::tanh_scaled(1.0);
        let pts = SpatialSet::Grid1d { xs: vec![0.0] };
        let mc = McConfig {
            paths: 4000,
            dt: 5e-4,
            ..Default::default()
        };
        let mut sups = Vec::new();
        for &t in &[2e-3, 8e-3, 3.2e-2] {
            let slice = weighted_gradient(&field, &phi, t, &pts, &mc).unwrap();
            sups.push(slice.sup_wgrad().unwrap());
        }
        for s in &sups {
            assert!(*s < 1.5, "gradient should stay near |tanh'| <= 1: {sups:?}");
        }
    }

    #[test]
    fn noise_floor_error_for_pathological_step() {
        // Rapidly oscillating sign-like datum: at h = 1e-5 the central
        // difference sees O(1/h) jump noise that dwarfs the t^{-1/2} signal
        // bound, so the operation must refuse.
        let field = ou();
        let phi = BoundedFn::new("sign(sin(1000x))", 1.0, |x: &[f64]| {
            (1000.0 * x[0]).sin().signum()
        });
        let pts = SpatialSet::Grid1d { xs: vec![0.0] };
        let mc = McConfig {
            paths: 1400,
            dt: 5e-2,
            fd_step: Some(1e-5),
            ..Default::default()
        };
        let err = weighted_gradient(&field, &phi, 1.0, &pts, &mc).unwrap_err();
        assert!(matches!(err, Error::StepTooSmall { .. }), "got {err:?}");
    }

    #[test]
    fn ct_profile_for_ou_cos_is_below_one() {
        let field = ou();
        let phi = BoundedFn::cosine();
        let pts = SpatialSet::uniform_1d(-3.0, 3.0, 13);
        let mc = McConfig {
            paths: 3000,
            dt: 5e-3,
            ..Default::default()
        };
        let est = estimate_ct(&field, &[phi], 1.0, &[0.1, 0.3, 0.5, 1.0], &pts, &mc).unwrap();
        // |∂_x S(t)cos| <= e^{-t} so t^{1/2} e^{-t} < 1 on (0, 1].
        assert!(est.c_t <= 1.0, "C_T = {}", est.c_t);
        assert!(est.c_t > 0.1);
        // Envelope t^{1/2} e^{-t} at the profile times, with slack for MC.
        for p in &est.profile {
            assert!(p.weighted <= p.t.sqrt() * (-p.t).exp() + 0.1);
        }
    }
}
