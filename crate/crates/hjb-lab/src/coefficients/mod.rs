//! Coefficient fields of the elliptic operator
//! `A f = ½ Tr[Q D²f] + ⟨B, ∇f⟩` with `G = √Q`.
//!
//! A [`CoefficientField`] bundles the diffusion matrix `Q`, its principal
//! square root `G`, the drift `B`, their first and second derivatives, and the
//! ellipticity/dissipativity envelopes `ν`, `b` that the structural hypotheses
//! quantify. Derivatives are analytic for the built-in families and fall back
//! to relatively-scaled central differences otherwise.

mod auxiliary;
mod cutoff;
mod hypotheses;

pub use auxiliary::auxiliary_functions;
pub use cutoff::{eval_cutoff, CutoffFamily};
pub use hypotheses::{check_hypotheses, ConditionRecord, HypothesisReport, SamplingMeta};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `x ↦ [∂_k G(x)]_k`.
type Rank3Fn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
/// `x ↦ [[∂_i ∂_j G(x)]_j]_i`.
type Rank4Fn = Arc<dyn Fn(&[f64]) -> Vec<Vec<DMatrix<f64>>> + Send + Sync>;

/// How spatial derivatives of `G` and `B` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    /// Central differences with step `h = h_rel·(1 + |x|)`.
    CentralDifference,
}

/// Relative central-difference step; balances truncation against roundoff for
/// polynomially growing fields.
pub const CENTRAL_DIFF_H_REL: f64 = 1e-4;

/// Condition-number threshold beyond which `G(x)` counts as singular.
pub const SINGULAR_COND_THRESHOLD: f64 = 1e12;

#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    label: String,
    q_fn: MatFn,
    g_fn: MatFn,
    drift_fn: VecFn,
    dg_fn: Option<Rank3Fn>,
    d2g_fn: Option<Rank4Fn>,
    db_fn: Option<MatFn>,
    nu_fn: ScalarFn,
    nu0: f64,
    /// Analytic dissipativity envelope `b(x)` when known; otherwise derived
    /// from the spectrum of `M(x)` on demand.
    diss_fn: Option<ScalarFn>,
    derivative_mode: DerivativeMode,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("derivative_mode", &self.derivative_mode)
            .finish()
    }
}

impl CoefficientField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.derivative_mode
    }

    /// Diffusion matrix `Q(x)`.
    pub fn q(&self, x: &[f64]) -> DMatrix<f64> {
        (self.q_fn)(x)
    }

    /// Principal square root `G(x) = √Q(x)`.
    pub fn g(&self, x: &[f64]) -> DMatrix<f64> {
        (self.g_fn)(x)
    }

    /// Drift vector `B(x)`.
    pub fn drift(&self, x: &[f64]) -> DVector<f64> {
        (self.drift_fn)(x)
    }

    /// Ellipticity envelope `ν(x)` with `⟨Q(x)ξ,ξ⟩ ≥ ν(x)|ξ|²`.
    pub fn nu(&self, x: &[f64]) -> f64 {
        (self.nu_fn)(x)
    }

    /// Uniform ellipticity floor `ν₀`.
    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    fn fd_step(x: &[f64]) -> f64 {
        CENTRAL_DIFF_H_REL * (1.0 + linalg::norm(x))
    }

    /// First derivatives `[∂_k G(x)]_k`.
    pub fn dg(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match &self.dg_fn {
            Some(f) => f(x),
            None => self.dg_central(x, Self::fd_step(x)),
        }
    }

    /// Central-difference `∂_k G`, exposed for derivative cross-checks.
    pub fn dg_central(&self, x: &[f64], h: f64) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.dim);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for k in 0..self.dim {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            out.push((self.g(&xp) - self.g(&xm)) / (2.0 * h));
            xp[k] = x[k];
            xm[k] = x[k];
        }
        out
    }

    /// Second derivatives `[∂_i ∂_j G(x)]_{ij}`.
    pub fn d2g(&self, x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        match &self.d2g_fn {
            Some(f) => f(x),
            None => {
                // Nested central differences on G.
                let h = Self::fd_step(x);
                let mut out = vec![vec![DMatrix::zeros(self.dim, self.dim); self.dim]; self.dim];
                let mut xs = x.to_vec();
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let d2 = if i == j {
                            let g0 = self.g(x);
                            xs[i] = x[i] + h;
                            let gp = self.g(&xs);
                            xs[i] = x[i] - h;
                            let gm = self.g(&xs);
                            xs[i] = x[i];
                            (gp + gm - 2.0 * g0) / (h * h)
                        } else {
                            let mut at = |si: f64, sj: f64| {
                                xs[i] = x[i] + si * h;
                                xs[j] = x[j] + sj * h;
                                let g = self.g(&xs);
                                xs[i] = x[i];
                                xs[j] = x[j];
                                g
                            };
                            (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0))
                                / (4.0 * h * h)
                        };
                        out[i][j] = d2;
                    }
                }
                out
            }
        }
    }

    /// Drift Jacobian `(DB)_{ij} = ∂_j B_i`.
    pub fn db(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.db_fn {
            Some(f) => f(x),
            None => self.db_central(x, Self::fd_step(x)),
        }
    }

    /// Central-difference drift Jacobian, exposed for cross-checks.
    pub fn db_central(&self, x: &[f64], h: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in 0..self.dim {
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            let col = (self.drift(&xp) - self.drift(&xm)) / (2.0 * h);
            for i in 0..self.dim {
                jac[(i, j)] = col[i];
            }
            xp[j] = x[j];
            xm[j] = x[j];
        }
        jac
    }

    /// Inverse of `G(x)`; fails when the conditioning passes
    /// [`SINGULAR_COND_THRESHOLD`].
    pub fn g_inv(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.g(x);
        let cond = linalg::condition_number(&g);
        if !cond.is_finite() || cond > SINGULAR_COND_THRESHOLD {
            return Err(Error::SingularDiffusion {
                point: x.to_vec(),
                cond,
            });
        }
        linalg::invert(&g).ok_or(Error::SingularDiffusion {
            point: x.to_vec(),
            cond,
        })
    }

    /// The drift-domination matrix
    /// `M = G (DB) G⁻¹ − Σ_{ij} Q_{ij} (∂_{ij} G) G⁻¹ − Σ_j B_j (∂_j G) G⁻¹`.
    pub fn m_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.g(x);
        let ginv = self.g_inv(x)?;
        let q = self.q(x);
        let db = self.db(x);
        let dg = self.dg(x);
        let d2g = self.d2g(x);
        let b = self.drift(x);

        let mut m = &g * db * &ginv;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m -= &d2g[i][j] * &ginv * q[(i, j)];
            }
        }
        for j in 0..self.dim {
            m -= &dg[j] * &ginv * b[j];
        }
        Ok(m)
    }

    /// Dissipativity envelope `b(x)`: the analytic one when supplied,
    /// otherwise `−λ_max(sym M(x))`.
    pub fn dissipation(&self, x: &[f64]) -> Result<f64> {
        if let Some(f) = &self.diss_fn {
            return Ok(f(x));
        }
        Ok(-linalg::lambda_max_sym(&self.m_matrix(x)?))
    }

    /// Ornstein–Uhlenbeck field: `Q = I`, `G = I`, `B(x) = −x`, `ν ≡ 1`,
    /// `b ≡ 1`.
    pub fn ornstein_uhlenbeck(dim: usize) -> Self {
        assert!(dim >= 1);
        let zero_rank3 = move |_: &[f64]| vec![DMatrix::zeros(dim, dim); dim];
        let zero_rank4 =
            move |_: &[f64]| vec![vec![DMatrix::zeros(dim, dim); dim]; dim];
        Self {
            dim,
            label: "ou".into(),
            q_fn: Arc::new(move |_| DMatrix::identity(dim, dim)),
            g_fn: Arc::new(move |_| DMatrix::identity(dim, dim)),
            drift_fn: Arc::new(|x: &[f64]| -DVector::from_column_slice(x)),
            dg_fn: Some(Arc::new(zero_rank3)),
            d2g_fn: Some(Arc::new(zero_rank4)),
            db_fn: Some(Arc::new(move |_| -DMatrix::identity(dim, dim))),
            nu_fn: Arc::new(|_| 1.0),
            nu0: 1.0,
            diss_fn: Some(Arc::new(|_| 1.0)),
            derivative_mode: DerivativeMode::Analytic,
        }
    }

    /// Driftless unit-diffusion field: `B ≡ 0`, `G = I`. Forward simulation
    /// is well defined, but `M ≡ 0` so drift domination fails.
    pub fn brownian(dim: usize) -> Self {
        assert!(dim >= 1);
        let zero_rank3 = move |_: &[f64]| vec![DMatrix::zeros(dim, dim); dim];
        let zero_rank4 =
            move |_: &[f64]| vec![vec![DMatrix::zeros(dim, dim); dim]; dim];
        Self {
            dim,
            label: "brownian".into(),
            q_fn: Arc::new(move |_| DMatrix::identity(dim, dim)),
            g_fn: Arc::new(move |_| DMatrix::identity(dim, dim)),
            drift_fn: Arc::new(move |_: &[f64]| DVector::zeros(dim)),
            dg_fn: Some(Arc::new(zero_rank3)),
            d2g_fn: Some(Arc::new(zero_rank4)),
            db_fn: Some(Arc::new(move |_| DMatrix::zeros(dim, dim))),
            nu_fn: Arc::new(|_| 1.0),
            nu0: 1.0,
            diss_fn: None,
            derivative_mode: DerivativeMode::Analytic,
        }
    }

    /// Largest relative deviation between analytic and central-difference
    /// derivatives of `G` and `B` over `points` at step `h`.
    pub fn derivative_cross_check(&self, points: &[Vec<f64>], h: f64) -> f64 {
        let mut worst = 0.0f64;
        for x in points {
            let dg_a = self.dg(x);
            let dg_c = self.dg_central(x, h);
            for k in 0..self.dim {
                let diff = &dg_a[k] - &dg_c[k];
                let scale = 1.0 + linalg::frobenius(&dg_a[k]);
                worst = worst.max(linalg::frobenius(&diff) / scale);
            }
            let db_a = self.db(x);
            let db_c = self.db_central(x, h);
            let diff = &db_a - &db_c;
            let scale = 1.0 + linalg::frobenius(&db_a);
            worst = worst.max(linalg::frobenius(&diff) / scale);
        }
        worst
    }
}

/// Parameters of the polynomial example family
/// `Q(x) = q (1+|x|²)^m`, `B_i(x) = −b_i x_i (1+|x|²)^p`.
#[derive(Debug, Clone)]
pub struct ExampleFamilyParams {
    pub dim: usize,
    pub m: f64,
    pub p: f64,
    pub b_coeffs: Vec<f64>,
    pub q: DMatrix<f64>,
}

impl ExampleFamilyParams {
    /// Isotropic convenience constructor with `q = I`.
    pub fn isotropic(dim: usize, m: f64, p: f64, b: f64) -> Self {
        Self {
            dim,
            m,
            p,
            b_coeffs: vec![b; dim],
            q: DMatrix::identity(dim, dim),
        }
    }
}

/// Build the example family field, checking admissibility first:
/// `m ≤ min b_i / max b_i` for `N ≥ 2`, `2p + 1 > m` for `N = 1`.
pub fn make_example_family(params: &ExampleFamilyParams) -> Result<CoefficientField> {
    let n = params.dim;
    if n == 0 || params.b_coeffs.len() != n || params.q.nrows() != n || params.q.ncols() != n {
        return Err(Error::Admissibility(format!(
            "dimension mismatch: dim = {n}, b has {} entries, q is {}x{}",
            params.b_coeffs.len(),
            params.q.nrows(),
            params.q.ncols()
        )));
    }
    if params.m < 0.0 || params.p < 0.0 {
        return Err(Error::Admissibility(format!(
            "exponents must be nonnegative (m = {}, p = {})",
            params.m, params.p
        )));
    }
    if params.b_coeffs.iter().any(|&b| b <= 0.0) {
        return Err(Error::Admissibility("all b_i must be positive".into()));
    }
    let asym = (&params.q - params.q.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::Admissibility(format!(
            "q must be symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let nu0 = linalg::lambda_min_sym(&params.q);
    if nu0 <= 0.0 {
        return Err(Error::Admissibility(format!(
            "q must be positive definite (λ_min = {nu0:.3e})"
        )));
    }
    let b_min = params.b_coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
    let b_max = params
        .b_coeffs
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if n >= 2 && params.m > b_min / b_max {
        return Err(Error::Admissibility(format!(
            "m = {} violates m <= min(b)/max(b) = {}",
            params.m,
            b_min / b_max
        )));
    }
    if n == 1 && 2.0 * params.p + 1.0 <= params.m {
        return Err(Error::Admissibility(format!(
            "m = {} violates 2p + 1 > m (p = {})",
            params.m, params.p
        )));
    }

    let sqrt_q = linalg::sqrtm_spd(&params.q);
    let (m_exp, p_exp) = (params.m, params.p);
    let q = params.q.clone();
    let b_coeffs = params.b_coeffs.clone();

    let w = |x: &[f64]| 1.0 + x.iter().map(|v| v * v).sum::<f64>();

    let q_cl = q.clone();
    let q_fn = move |x: &[f64]| &q_cl * w(x).powf(m_exp);

    let sq = sqrt_q.clone();
    let g_fn = move |x: &[f64]| &sq * w(x).powf(m_exp / 2.0);

    let bs = b_coeffs.clone();
    let drift_fn = move |x: &[f64]| {
        let wp = w(x).powf(p_exp);
        DVector::from_iterator(x.len(), x.iter().zip(&bs).map(|(xi, bi)| -bi * xi * wp))
    };

    // ∂_k G = √q · m x_k w^{m/2 - 1}
    let sq = sqrt_q.clone();
    let dg_fn = move |x: &[f64]| {
        let c = m_exp * w(x).powf(m_exp / 2.0 - 1.0);
        x.iter().map(|&xk| &sq * (c * xk)).collect::<Vec<_>>()
    };

    // ∂_i ∂_j G = √q · m [δ_ij w^{m/2-1} + (m-2) x_i x_j w^{m/2-2}]
    let sq = sqrt_q.clone();
    let d2g_fn = move |x: &[f64]| {
        let n = x.len();
        let w1 = w(x).powf(m_exp / 2.0 - 1.0);
        let w2 = w(x).powf(m_exp / 2.0 - 2.0);
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        &sq * (m_exp * (delta * w1 + (m_exp - 2.0) * x[i] * x[j] * w2))
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };

    // (DB)_{ij} = −b_i (δ_ij w^p + 2p x_i x_j w^{p-1})
    let bs = b_coeffs.clone();
    let db_fn = move |x: &[f64]| {
        let n = x.len();
        let wp = w(x).powf(p_exp);
        let wp1 = w(x).powf(p_exp - 1.0);
        DMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            -bs[i] * (delta * wp + 2.0 * p_exp * x[i] * x[j] * wp1)
        })
    };

    let nu_fn = move |x: &[f64]| nu0 * w(x).powf(m_exp);

    Ok(CoefficientField {
        dim: n,
        label: format!("example_family(m={}, p={})", params.m, params.p),
        q_fn: Arc::new(q_fn),
        g_fn: Arc::new(g_fn),
        drift_fn: Arc::new(drift_fn),
        dg_fn: Some(Arc::new(dg_fn)),
        d2g_fn: Some(Arc::new(d2g_fn)),
        db_fn: Some(Arc::new(db_fn)),
        nu_fn: Arc::new(nu_fn),
        nu0,
        diss_fn: None,
        derivative_mode: DerivativeMode::Analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example_n2() -> CoefficientField {
        make_example_family(&ExampleFamilyParams {
            dim: 2,
            m: 0.4,
            p: 1.0,
            b_coeffs: vec![1.0, 2.0],
            q: DMatrix::identity(2, 2),
        })
        .unwrap()
    }

    #[test]
    fn admissible_family_accepted() {
        // m = 0.4 <= min(b)/max(b) = 0.5
        let field = example_n2();
        assert_eq!(field.dim(), 2);
    }

    #[test]
    fn inadmissible_m_rejected() {
        let err = make_example_family(&ExampleFamilyParams {
            dim: 2,
            m: 0.6,
            p: 1.0,
            b_coeffs: vec![1.0, 2.0],
            q: DMatrix::identity(2, 2),
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("min(b)/max(b)"), "unexpected message: {msg}");
    }

    #[test]
    fn one_dim_growth_rejected() {
        // 2p + 1 = 1 <= m = 1.2
        let err = make_example_family(&ExampleFamilyParams::isotropic(1, 1.2, 0.0, 1.0))
            .unwrap_err();
        assert!(err.to_string().contains("2p + 1 > m"));
    }

    #[test]
    fn zero_exponents_reduce_to_ou() {
        let field =
            make_example_family(&ExampleFamilyParams::isotropic(1, 0.0, 0.0, 1.0)).unwrap();
        let x = [0.7];
        assert_relative_eq!(field.q(&x)[(0, 0)], 1.0);
        assert_relative_eq!(field.drift(&x)[0], -0.7);
        let ou = CoefficientField::ornstein_uhlenbeck(1);
        assert_relative_eq!(ou.drift(&x)[0], field.drift(&x)[0]);
    }

    #[test]
    fn g_squares_to_q() {
        let field = example_n2();
        for x in [[0.0, 0.0], [1.0, -0.5], [2.0, 3.0]] {
            let g = field.g(&x);
            let gg = &g * &g;
            let q = field.q(&x);
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(gg[(i, j)], q[(i, j)], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_central_differences_second_order() {
        let field = example_n2();
        let points: Vec<Vec<f64>> = vec![vec![0.3, -0.8], vec![1.5, 0.2], vec![-2.0, 1.0]];
        let e1 = field.derivative_cross_check(&points, 1e-3);
        let e2 = field.derivative_cross_check(&points, 5e-4);
        // Central differences converge at O(h²): halving h shrinks the error
        // by roughly four.
        assert!(e1 > 0.0);
        assert!(e2 < e1 / 2.5, "e1 = {e1:.3e}, e2 = {e2:.3e}");
    }

    #[test]
    fn ou_m_matrix_is_minus_identity() {
        let ou = CoefficientField::ornstein_uhlenbeck(2);
        let m = ou.m_matrix(&[0.7, -0.3]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { -1.0 } else { 0.0 };
                assert_relative_eq!(m[(i, j)], expect, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(ou.dissipation(&[5.0, 5.0]).unwrap(), 1.0);
    }

    #[test]
    fn brownian_has_zero_dissipation() {
        let field = CoefficientField::brownian(2);
        assert_relative_eq!(
            field.dissipation(&[1.0, 2.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn ellipticity_on_random_directions(
            x0 in -3.0f64..3.0, x1 in -3.0f64..3.0,
            xi0 in -1.0f64..1.0, xi1 in -1.0f64..1.0,
        ) {
            prop_assume!(xi0.abs() + xi1.abs() > 1e-3);
            let field = example_n2();
            let x = [x0, x1];
            let q = field.q(&x);
            let xi = DVector::from_column_slice(&[xi0, xi1]);
            let quad = (&q * &xi).dot(&xi);
            let nsq = xi.dot(&xi);
            prop_assert!(quad >= field.nu(&x) * nsq * (1.0 - 1e-12));
            prop_assert!(quad >= field.nu0() * nsq * (1.0 - 1e-12));
        }
    }
}
