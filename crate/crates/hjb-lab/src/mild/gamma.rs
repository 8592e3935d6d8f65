//! Window engine for the integral operator
//! `Γv(t,x) = S(T_w−t)φ_w(x) − ∫_t^{T_w} S(r−t) ψ(·, G∇v(r,·)) dr`.
//!
//! One Feynman–Kac ensemble per evaluation point serves the whole window:
//! the SDE is autonomous, so the same paths provide `S(d)g(x) = E g(X_d^x)`
//! for every duration `d` the slice times and quadrature nodes require.
//! Increments are frozen per (window, point, path pair) — Picard iteration
//! then contracts to the fixed point of one deterministic map — antithetic
//! pairs cut the short-window variance, and the `x ± h e_i` companions ride
//! the same noise for the output gradients.
//!
//! The time quadrature substitutes `r = t + s²` near the lower endpoint and
//! `r = T_w − s²` near the terminal one; both (r−t)^{-1/2}- and
//! (T_w−r)^{-1/2}-type integrand growth become bounded in `s`.

use ndarray::Array2;
use rayon::prelude::*;

use super::HamiltonianSpec;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::funcs::BoundedFn;
use crate::linalg::{gauss_legendre_on, norm};
use crate::rng;
use crate::sampling::RunningStats;
use crate::semigroup::{McConfig, SpatialSet, ValueSlice};

const TAG_GAMMA: u64 = 0x40;

/// Clustered slice times `τ_j = t_hi − Δ((J−j)/J)²`, `j = 0..=J`.
pub(crate) fn window_slice_times(t_lo: f64, t_hi: f64, intervals: usize) -> Vec<f64> {
    let j_max = intervals.max(2);
    let delta = t_hi - t_lo;
    (0..=j_max)
        .map(|j| {
            let frac = (j_max - j) as f64 / j_max as f64;
            t_hi - delta * frac * frac
        })
        .collect()
}

/// What to evaluate once a path reaches a given duration.
#[derive(Debug, Clone, Copy)]
enum EvalKind {
    /// Terminal datum for slice `j`.
    Terminal { slice: usize },
    /// Quadrature node of slice `j` at absolute time `r` with weight `w`.
    Quad { slice: usize, r: f64, w: f64 },
    /// Coarse-rule node used only for the quadrature error estimate.
    QuadCoarse { slice: usize, r: f64, w: f64 },
}

#[derive(Debug, Clone)]
struct EvalEntry {
    duration: f64,
    kind: EvalKind,
}

/// Time interpolation of weighted gradients across the iterate's slices:
/// linear between gradient-carrying slices, constant beyond the last one
/// (the near-terminal convention: past the final interior slice the gradient
/// of the previous slice is reused).
pub(crate) struct GradTable<'a> {
    times: Vec<f64>,
    slices: Vec<&'a ValueSlice>,
}

impl<'a> GradTable<'a> {
    pub(crate) fn new(slices: &'a [ValueSlice]) -> Self {
        let carrying: Vec<&ValueSlice> =
            slices.iter().filter(|s| s.wgrad.is_some()).collect();
        Self {
            times: carrying.iter().map(|s| s.t).collect(),
            slices: carrying,
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub(crate) fn wgrad_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::MissingGradient { t });
        }
        let n = self.times.len();
        let pos = self.times.partition_point(|&tau| tau <= t);
        if pos == 0 {
            let wg = self.slices[0].interp_wgrad(x)?;
            out.copy_from_slice(&wg);
            return Ok(());
        }
        if pos >= n {
            let wg = self.slices[n - 1].interp_wgrad(x)?;
            out.copy_from_slice(&wg);
            return Ok(());
        }
        let (t0, t1) = (self.times[pos - 1], self.times[pos]);
        let w = (t - t0) / (t1 - t0);
        let a = self.slices[pos - 1].interp_wgrad(x)?;
        let b = self.slices[pos].interp_wgrad(x)?;
        for d in 0..out.len() {
            out[d] = (1.0 - w) * a[d] + w * b[d];
        }
        Ok(())
    }
}

/// One window of the backward problem, with everything `Γ` needs.
pub(crate) struct WindowProblem<'a> {
    pub field: &'a CoefficientField,
    pub ham: &'a HamiltonianSpec,
    /// Datum at `t_hi` (the original φ or a seam interpolant).
    pub terminal: &'a BoundedFn,
    /// Weighted gradient of the terminal datum on `points`, when known
    /// (seam windows inherit it from the previously solved window).
    pub terminal_wgrad: Option<Array2<f64>>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: &'a SpatialSet,
    pub slice_times: Vec<f64>,
    pub mc: &'a McConfig,
    pub quad_nodes: usize,
    /// CRN shift for output gradients.
    pub h_grad: f64,
    /// Extra RNG tag so different windows draw independent noise.
    pub window_tag: u64,
}

impl<'a> WindowProblem<'a> {
    /// Quadrature rule for `∫_τ^{t_hi} f(r) dr` with endpoint substitutions.
    fn quad_rule(&self, tau: f64, nodes: usize) -> Vec<(f64, f64)> {
        let len = self.t_hi - tau;
        if len <= 0.0 {
            return Vec::new();
        }
        let mid = 0.5 * (tau + self.t_hi);
        let half_nodes = (nodes / 2).max(2);
        let mut rule = Vec::with_capacity(2 * half_nodes);
        // r = tau + s² on [tau, mid]
        let (s_nodes, s_weights) = gauss_legendre_on(half_nodes, 0.0, (mid - tau).sqrt());
        for (s, w) in s_nodes.iter().zip(&s_weights) {
            rule.push((tau + s * s, 2.0 * s * w));
        }
        // r = t_hi − s² on [mid, t_hi]
        let (s_nodes, s_weights) = gauss_legendre_on(half_nodes, 0.0, (self.t_hi - mid).sqrt());
        for (s, w) in s_nodes.iter().zip(&s_weights) {
            rule.push((self.t_hi - s * s, 2.0 * s * w));
        }
        rule
    }

    /// Build the duration-sorted evaluation schedule for all slices; the
    /// embedded coarse rule rides along for the quadrature error estimate.
    fn schedule(&self, with_quad: bool) -> Vec<EvalEntry> {
        let j_count = self.slice_times.len();
        let mut entries = Vec::new();
        for (j, &tau) in self.slice_times.iter().enumerate() {
            if j + 1 == j_count {
                continue; // terminal slice is exact
            }
            entries.push(EvalEntry {
                duration: self.t_hi - tau,
                kind: EvalKind::Terminal { slice: j },
            });
            if !with_quad {
                continue;
            }
            for &(r, w) in &self.quad_rule(tau, self.quad_nodes) {
                entries.push(EvalEntry {
                    duration: r - tau,
                    kind: EvalKind::Quad { slice: j, r, w },
                });
            }
            for &(r, w) in &self.quad_rule(tau, (self.quad_nodes / 2).max(4)) {
                entries.push(EvalEntry {
                    duration: r - tau,
                    kind: EvalKind::QuadCoarse { slice: j, r, w },
                });
            }
        }
        entries.sort_by(|a, b| a.duration.partial_cmp(&b.duration).unwrap());
        entries
    }

    /// Evaluate `Γv` on the window. `prev = None` drops the integral term
    /// (the `ψ ≡ 0` image, used as the Picard seed). Returns the new iterate
    /// and an embedded estimate of the quadrature error.
    pub(crate) fn apply(&self, prev: Option<&[ValueSlice]>) -> Result<(Vec<ValueSlice>, f64)> {
        let n = self.field.dim();
        let j_count = self.slice_times.len();
        let grad_table = prev.map(GradTable::new);
        let with_quad = match &grad_table {
            None => false,
            Some(t) if t.is_empty() => {
                return Err(Error::MissingGradient { t: self.t_lo });
            }
            Some(_) => true,
        };
        let entries = self.schedule(with_quad);
        let pts = self.points.points();
        let n_shifts = 2 * n + 1;
        let pairs = (self.mc.paths / 2).max(1);
        let dt_cap = self.mc.dt.min((self.t_hi - self.t_lo) / 8.0).max(1e-9);

        struct PointOut {
            values: Vec<f64>,
            se: Vec<f64>,
            wgrad: Vec<Vec<f64>>,
            wgrad_se: Vec<Vec<f64>>,
            quad_est: f64,
        }

        let per_point: Result<Vec<PointOut>> = pts
            .par_iter()
            .enumerate()
            .map(|(pi, x)| -> Result<PointOut> {
                let estimate_quad = pi == 0 && with_quad;
                // Accumulators: per slice, per shift: Γ statistics over pairs.
                let mut gamma_stats =
                    vec![vec![RunningStats::new(); n_shifts]; j_count];
                let mut quot_stats = vec![vec![RunningStats::new(); n]; j_count];
                let mut coarse_gap = vec![0.0f64; j_count];

                // Per-pair temporaries.
                let mut sem = vec![vec![0.0f64; n_shifts]; j_count];
                let mut quad = vec![vec![0.0f64; n_shifts]; j_count];
                let mut quad_coarse = vec![0.0f64; j_count];
                let mut states: Vec<Vec<f64>> = Vec::new();
                let mut dw = vec![0.0; n];
                let mut wg = vec![0.0; n];

                for pair in 0..pairs {
                    let rng = rng::stream(
                        self.mc.seed,
                        &[TAG_GAMMA, self.window_tag, pi as u64, pair as u64],
                    );
                    for row in sem.iter_mut().chain(quad.iter_mut()) {
                        row.iter_mut().for_each(|v| *v = 0.0);
                    }
                    quad_coarse.iter_mut().for_each(|v| *v = 0.0);

                    for sign in [1.0f64, -1.0] {
                        // Rebuild the shifted state family; both antithetic
                        // legs replay the same draws with mirrored signs.
                        let mut leg_rng = rng.clone();
                        states.clear();
                        states.push(x.clone());
                        for d in 0..n {
                            let mut xp = x.clone();
                            xp[d] += self.h_grad;
                            states.push(xp);
                            let mut xm = x.clone();
                            xm[d] -= self.h_grad;
                            states.push(xm);
                        }
                        let mut dur = 0.0f64;
                        for entry in &entries {
                            let mut remaining = entry.duration - dur;
                            while remaining > 1e-12 {
                                let step = remaining.min(dt_cap);
                                crate::semigroup::draw_increment(&mut leg_rng, n, step, &mut dw);
                                if sign < 0.0 {
                                    dw.iter_mut().for_each(|v| *v = -*v);
                                }
                                for s in states.iter_mut() {
                                    crate::semigroup::em_step(
                                        self.field, s, step, &dw, self.mc.scheme,
                                    );
                                    let r = norm(s);
                                    if r > self.mc.guard_radius {
                                        return Err(Error::Blowup {
                                            path: pair,
                                            step: 0,
                                            norm: r,
                                            guard: self.mc.guard_radius,
                                        });
                                    }
                                }
                                dur += step;
                                remaining = entry.duration - dur;
                            }
                            match entry.kind {
                                EvalKind::Terminal { slice } => {
                                    for (s, st) in states.iter().enumerate() {
                                        sem[slice][s] += 0.5 * self.terminal.eval(st);
                                    }
                                }
                                EvalKind::Quad { slice, r, w } => {
                                    let table = grad_table.as_ref().unwrap();
                                    for (s, st) in states.iter().enumerate() {
                                        table.wgrad_at(r, st, &mut wg)?;
                                        quad[slice][s] += 0.5 * w * self.ham.eval(st, &wg);
                                    }
                                }
                                EvalKind::QuadCoarse { slice, r, w } => {
                                    if estimate_quad {
                                        let table = grad_table.as_ref().unwrap();
                                        table.wgrad_at(r, &states[0], &mut wg)?;
                                        quad_coarse[slice] +=
                                            0.5 * w * self.ham.eval(&states[0], &wg);
                                    }
                                }
                            }
                        }
                    }

                    for j in 0..j_count - 1 {
                        let center = sem[j][0] - quad[j][0];
                        gamma_stats[j][0].push(center);
                        for d in 0..n {
                            let up = sem[j][1 + 2 * d] - quad[j][1 + 2 * d];
                            let dn = sem[j][2 + 2 * d] - quad[j][2 + 2 * d];
                            quot_stats[j][d].push((up - dn) / (2.0 * self.h_grad));
                            gamma_stats[j][1 + 2 * d].push(up);
                            gamma_stats[j][2 + 2 * d].push(dn);
                        }
                        if estimate_quad {
                            coarse_gap[j] += (quad[j][0] - quad_coarse[j]) / pairs as f64;
                        }
                    }
                }

                let mut values = vec![0.0; j_count];
                let mut se = vec![0.0; j_count];
                let mut wgrad = vec![vec![0.0; n]; j_count];
                let mut wgrad_se = vec![vec![0.0; n]; j_count];
                let g = self.field.g(x);
                for j in 0..j_count {
                    if j + 1 == j_count {
                        values[j] = self.terminal.eval(x);
                        continue;
                    }
                    values[j] = gamma_stats[j][0].mean();
                    se[j] = gamma_stats[j][0].se();
                    for row in 0..n {
                        let mut acc = 0.0;
                        let mut var = 0.0;
                        for d in 0..n {
                            acc += g[(row, d)] * quot_stats[j][d].mean();
                            var += (g[(row, d)] * quot_stats[j][d].se()).powi(2);
                        }
                        wgrad[j][row] = acc;
                        wgrad_se[j][row] = var.sqrt();
                    }
                }
                let quad_est = coarse_gap.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                Ok(PointOut {
                    values,
                    se,
                    wgrad,
                    wgrad_se,
                    quad_est,
                })
            })
            .collect();
        let per_point = per_point?;

        let n_pts = pts.len();
        let mut slices = Vec::with_capacity(j_count);
        for (j, &tau) in self.slice_times.iter().enumerate() {
            let terminal = j + 1 == j_count;
            let mut values = Vec::with_capacity(n_pts);
            let mut se = Vec::with_capacity(n_pts);
            let mut wgrad = Array2::zeros((n_pts, n));
            let mut wgrad_se = Array2::zeros((n_pts, n));
            for (pi, out) in per_point.iter().enumerate() {
                values.push(out.values[j]);
                se.push(out.se[j]);
                if !terminal {
                    for d in 0..n {
                        wgrad[(pi, d)] = out.wgrad[j][d];
                        wgrad_se[(pi, d)] = out.wgrad_se[j][d];
                    }
                }
            }
            let (wgrad, wgrad_se) = if terminal {
                (self.terminal_wgrad.clone(), None)
            } else {
                (Some(wgrad), Some(wgrad_se))
            };
            slices.push(ValueSlice {
                t: tau,
                points: self.points.clone(),
                values,
                se,
                wgrad,
                wgrad_se,
            });
        }
        let quad_est = per_point.iter().fold(0.0f64, |a, p| a.max(p.quad_est));
        Ok((slices, quad_est))
    }
}
