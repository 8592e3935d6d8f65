//! Finite-difference reference solver for the truncated Cauchy–Dirichlet
//! problem: `D_t u_R = A u_R` on `B(R)` with zero boundary data and initial
//! datum `η_R φ`. Restricted to one and two dimensions; its only job is to
//! cross-check the Monte Carlo semigroup in low dimension.

use ndarray::Array2;

use super::{SpatialSet, ValueSlice};
use crate::coefficients::{CoefficientField, CutoffFamily};
use crate::error::{Error, Result};
use crate::funcs::BoundedFn;

/// Space-time resolution of the reference scheme.
#[derive(Debug, Clone, Copy)]
pub struct FdGridConfig {
    /// Nodes per spatial axis (including boundary nodes).
    pub nodes: usize,
    pub dt: f64,
}

impl Default for FdGridConfig {
    fn default() -> Self {
        Self {
            nodes: 513,
            dt: 1e-3,
        }
    }
}

/// Solve up to time `t` and return the slice on the full grid (boundary
/// values are 0). 1-D uses Crank–Nicolson with a tridiagonal solve, 2-D
/// backward Euler with Gauss–Seidel sweeps.
pub fn fd_reference_solve(
    field: &CoefficientField,
    phi: &BoundedFn,
    truncation_radius: f64,
    grid: FdGridConfig,
    t: f64,
) -> Result<ValueSlice> {
    if field.dim() > 2 {
        return Err(Error::Dimension {
            dim: field.dim(),
            max: 2,
        });
    }
    if truncation_radius < 1.0 {
        return Err(Error::Admissibility(format!(
            "truncation radius must be >= 1 (got {truncation_radius})"
        )));
    }
    let cutoff = CutoffFamily::new(truncation_radius)?;
    match field.dim() {
        1 => solve_1d(field, phi, &cutoff, truncation_radius, grid, t),
        2 => solve_2d(field, phi, &cutoff, truncation_radius, grid, t),
        d => Err(Error::Dimension { dim: d, max: 2 }),
    }
}

fn solve_1d(
    field: &CoefficientField,
    phi: &BoundedFn,
    cutoff: &CutoffFamily,
    radius: f64,
    grid: FdGridConfig,
    t: f64,
) -> Result<ValueSlice> {
    let n = grid.nodes;
    let set = SpatialSet::uniform_1d(-radius, radius, n);
    let xs: Vec<f64> = set.points().iter().map(|p| p[0]).collect();
    let dx = xs[1] - xs[0];
    let mut u: Vec<f64> = xs
        .iter()
        .map(|&x| cutoff.value(&[x]) * phi.eval(&[x]))
        .collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    if t == 0.0 {
        let se = vec![0.0; n];
        return Ok(ValueSlice {
            t,
            points: set,
            values: u,
            se,
            wgrad: None,
            wgrad_se: None,
        });
    }

    let steps = ((t / grid.dt).ceil() as usize).max(1);
    let dt = t / steps as f64;
    // Interior operator coefficients: A u = ½ q u'' + b u'.
    let qs: Vec<f64> = xs.iter().map(|&x| field.q(&[x])[(0, 0)]).collect();
    let bs: Vec<f64> = xs.iter().map(|&x| field.drift(&[x])[0]).collect();

    // Crank–Nicolson: (I - dt/2 A) u⁺ = (I + dt/2 A) u.
    let theta = 0.5;
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let a = 0.5 * qs[i] / (dx * dx);
        let c = bs[i] / (2.0 * dx);
        lower[i] = -theta * dt * (a - c);
        diag[i] = 1.0 + theta * dt * 2.0 * a;
        upper[i] = -theta * dt * (a + c);
    }

    let mut rhs = vec![0.0; n];
    for _ in 0..steps {
        rhs[0] = 0.0;
        rhs[n - 1] = 0.0;
        for i in 1..n - 1 {
            let a = 0.5 * qs[i] / (dx * dx);
            let c = bs[i] / (2.0 * dx);
            let au = a * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + c * (u[i + 1] - u[i - 1]);
            rhs[i] = u[i] + (1.0 - theta) * dt * au;
        }
        u = thomas(&lower, &diag, &upper, &rhs)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stability("non-finite values in 1-D CN sweep".into()));
        }
    }
    let se = vec![0.0; n];
    Ok(ValueSlice {
        t,
        points: set,
        values: u,
        se,
        wgrad: None,
        wgrad_se: None,
    })
}

/// Tridiagonal solve (Thomas algorithm).
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::Stability("singular tridiagonal pivot".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::Stability("singular tridiagonal pivot".into()));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

fn solve_2d(
    field: &CoefficientField,
    phi: &BoundedFn,
    cutoff: &CutoffFamily,
    radius: f64,
    grid: FdGridConfig,
    t: f64,
) -> Result<ValueSlice> {
    let n = grid.nodes;
    let set = SpatialSet::uniform_2d(-radius, radius, n);
    let xs: Vec<f64> = match &set {
        SpatialSet::Grid2d { xs, .. } => xs.clone(),
        _ => unreachable!(),
    };
    let dx = xs[1] - xs[0];
    let idx = |i: usize, j: usize| i * n + j;
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let p = [xs[i], xs[j]];
            if i > 0 && i < n - 1 && j > 0 && j < n - 1 {
                u[idx(i, j)] = cutoff.value(&p) * phi.eval(&p);
            }
        }
    }
    if t == 0.0 {
        let se = vec![0.0; u.len()];
        return Ok(ValueSlice {
            t,
            points: set,
            values: u,
            se,
            wgrad: None,
            wgrad_se: None,
        });
    }

    let steps = ((t / grid.dt).ceil() as usize).max(1);
    let dt = t / steps as f64;
    // Precompute coefficients per interior node.
    let mut q11 = Array2::zeros((n, n));
    let mut q22 = Array2::zeros((n, n));
    let mut q12 = Array2::zeros((n, n));
    let mut b1 = Array2::zeros((n, n));
    let mut b2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let p = [xs[i], xs[j]];
            let q = field.q(&p);
            let b = field.drift(&p);
            q11[(i, j)] = q[(0, 0)];
            q22[(i, j)] = q[(1, 1)];
            q12[(i, j)] = q[(0, 1)];
            b1[(i, j)] = b[0];
            b2[(i, j)] = b[1];
        }
    }

    // Backward Euler; the cross-derivative term is lagged inside
    // Gauss–Seidel sweeps, the axis terms are implicit.
    let max_sweeps = 400;
    let tol = 1e-10;
    let mut next = u.clone();
    for _ in 0..steps {
        next.copy_from_slice(&u);
        let mut converged = false;
        for _sweep in 0..max_sweeps {
            let mut max_change = 0.0f64;
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let axx = 0.5 * q11[(i, j)] / (dx * dx);
                    let ayy = 0.5 * q22[(i, j)] / (dx * dx);
                    let cx = b1[(i, j)] / (2.0 * dx);
                    let cy = b2[(i, j)] / (2.0 * dx);
                    let cross = q12[(i, j)]
                        * (next[idx(i + 1, j + 1)] - next[idx(i + 1, j - 1)]
                            - next[idx(i - 1, j + 1)]
                            + next[idx(i - 1, j - 1)])
                        / (4.0 * dx * dx);
                    let off = (axx + cx) * next[idx(i + 1, j)]
                        + (axx - cx) * next[idx(i - 1, j)]
                        + (ayy + cy) * next[idx(i, j + 1)]
                        + (ayy - cy) * next[idx(i, j - 1)]
                        + cross;
                    let denom = 1.0 + dt * 2.0 * (axx + ayy);
                    let val = (u[idx(i, j)] + dt * off) / denom;
                    let change = (val - next[idx(i, j)]).abs();
                    if change > max_change {
                        max_change = change;
                    }
                    next[idx(i, j)] = val;
                }
            }
            if !max_change.is_finite() {
                return Err(Error::Stability("non-finite Gauss–Seidel sweep".into()));
            }
            if max_change < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Stability(format!(
                "Gauss–Seidel did not converge in {max_sweeps} sweeps"
            )));
        }
        u.copy_from_slice(&next);
    }
    let se = vec![0.0; u.len()];
    Ok(ValueSlice {
        t,
        points: set,
        values: u,
        se,
        wgrad: None,
        wgrad_se: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;

    #[test]
    fn dimension_guard() {
        let field = CoefficientField::ornstein_uhlenbeck(3);
        let err = fd_reference_solve(
            &field,
            &BoundedFn::cosine(),
            4.0,
            FdGridConfig::default(),
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { dim: 3, max: 2 }));
    }

    #[test]
    fn constant_preserved_away_from_boundary() {
        // φ ≡ 1, large R, small t: the interior value stays near 1; the gap
        // shrinks as R grows.
        let field = CoefficientField::ornstein_uhlenbeck(1);
        let phi = BoundedFn::constant(1.0);
        let cfg = FdGridConfig {
            nodes: 257,
            dt: 1e-3,
        };
        let gap_at = |r: f64| {
            let slice = fd_reference_solve(&field, &phi, r, cfg, 0.05).unwrap();
            (slice.interp_value(&[0.0]) - 1.0).abs()
        };
        let g4 = gap_at(4.0);
        let g8 = gap_at(8.0);
        assert!(g4 < 1e-3, "gap at R=4: {g4}");
        assert!(g8 <= g4 + 1e-12, "boundary influence must shrink with R");
    }

    #[test]
    fn maximum_principle() {
        let field = CoefficientField::ornstein_uhlenbeck(1);
        let phi = BoundedFn::cosine();
        let slice = fd_reference_solve(
            &field,
            &phi,
            4.0,
            FdGridConfig {
                nodes: 257,
                dt: 1e-3,
            },
            0.3,
        )
        .unwrap();
        assert!(slice.sup_value() <= phi.sup_bound() + 1e-12);
    }

    #[test]
    fn ou_closed_form_agreement_1d() {
        // S(t)cos(x) = cos(x e^{-t}) exp(-(1 - e^{-2t})/4) for the OU field.
        let field = CoefficientField::ornstein_uhlenbeck(1);
        let phi = BoundedFn::cosine();
        let t = 0.5;
        let slice = fd_reference_solve(
            &field,
            &phi,
            8.0,
            FdGridConfig {
                nodes: 1025,
                dt: 5e-4,
            },
            t,
        )
        .unwrap();
        for x in [0.0, 1.0, -1.0] {
            let exact = (x * (-t).exp()).cos() * (-(1.0 - (-2.0 * t).exp()) / 4.0).exp();
            let got = slice.interp_value(&[x]);
            assert!(
                (got - exact).abs() < 5e-3,
                "x = {x}: fd {got} vs exact {exact}"
            );
        }
    }

    #[test]
    fn two_dim_heat_decay() {
        let field = CoefficientField::brownian(2);
        let phi = BoundedFn::cosine();
        let slice = fd_reference_solve(
            &field,
            &phi,
            4.0,
            FdGridConfig {
                nodes: 65,
                dt: 2e-3,
            },
            0.2,
        )
        .unwrap();
        // Heat semigroup on cos(x₁): S(t)φ = e^{-t/2} cos(x₁).
        let exact = (-0.1f64).exp();
        let got = slice.interp_value(&[0.0, 0.0]);
        assert!((got - exact).abs() < 2e-2, "got {got}, exact {exact}");
    }
}
