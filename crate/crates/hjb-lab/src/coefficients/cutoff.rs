//! Smooth radial cutoff `η_R(x) = η(|x|/R)` used for domain truncation.
//!
//! The profile is `1` on `[0, 1/2]`, `exp(1 − 1/(1 − (4t−2)³))` on
//! `(1/2, 3/4)` and `0` from `3/4` on, so `η_R ≡ 1` on `B(R/2)` and
//! `η_R ≡ 0` outside `B(3R/4)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::norm;

#[derive(Debug, Clone, Copy)]
pub struct CutoffFamily {
    radius: f64,
}

impl CutoffFamily {
    pub fn new(radius: f64) -> Result<Self> {
        if radius < 1.0 {
            return Err(Error::Admissibility(format!(
                "cutoff radius must be >= 1 (got {radius})"
            )));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// 1-D profile `η(t)`.
    pub fn profile(t: f64) -> f64 {
        if t <= 0.5 {
            1.0
        } else if t >= 0.75 {
            0.0
        } else {
            let s = 4.0 * t - 2.0;
            (1.0 - 1.0 / (1.0 - s * s * s)).exp()
        }
    }

    /// `η'(t) = −12 s² (1−s³)⁻² η(t)` with `s = 4t − 2` on the transition
    /// band, zero elsewhere.
    pub fn profile_d1(t: f64) -> f64 {
        if t <= 0.5 || t >= 0.75 {
            return 0.0;
        }
        let s = 4.0 * t - 2.0;
        let den = 1.0 - s * s * s;
        -12.0 * s * s / (den * den) * Self::profile(t)
    }

    /// `η''(t) = (c'(t) + c(t)²) η(t)` for `c(t) = −12 s² (1−s³)⁻²`.
    pub fn profile_d2(t: f64) -> f64 {
        if t <= 0.5 || t >= 0.75 {
            return 0.0;
        }
        let s = 4.0 * t - 2.0;
        let den = 1.0 - s * s * s;
        let c = -12.0 * s * s / (den * den);
        let c_prime = -96.0 * s / (den * den) - 288.0 * s.powi(4) / (den * den * den);
        (c_prime + c * c) * Self::profile(t)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        Self::profile(norm(x) / self.radius)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let r = norm(x);
        let t = r / self.radius;
        let n = x.len();
        if t <= 0.5 || t >= 0.75 || r == 0.0 {
            return DVector::zeros(n);
        }
        let d1 = Self::profile_d1(t);
        DVector::from_iterator(n, x.iter().map(|&xi| d1 * xi / (r * self.radius)))
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let r = norm(x);
        let t = r / self.radius;
        let n = x.len();
        if t <= 0.5 || t >= 0.75 || r == 0.0 {
            return DMatrix::zeros(n, n);
        }
        let d1 = Self::profile_d1(t);
        let d2 = Self::profile_d2(t);
        let rr = self.radius;
        DMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            d2 * x[i] * x[j] / (r * r * rr * rr)
                + d1 * (delta / (r * rr) - x[i] * x[j] / (r * r * r * rr))
        })
    }

    /// The printed closed form of `∂_i η_R`, kept as an independent route for
    /// cross-checking [`CutoffFamily::gradient`]:
    /// `−x_i/(|x|R) · 12(4|x|/R−2)² / (1−(4|x|/R−2)³)² · η_R(x)` on the
    /// transition band.
    pub fn gradient_closed_form(&self, x: &[f64]) -> DVector<f64> {
        let r = norm(x);
        let t = r / self.radius;
        let n = x.len();
        if !(0.5..0.75).contains(&t) || r == 0.0 {
            return DVector::zeros(n);
        }
        let s = 4.0 * t - 2.0;
        let den = 1.0 - s * s * s;
        let coeff = 12.0 * s * s / (den * den) * self.value(x);
        DVector::from_iterator(n, x.iter().map(|&xi| -xi / (r * self.radius) * coeff))
    }
}

/// Evaluate `η_R` and its first two derivatives at `x`.
pub fn eval_cutoff(radius: f64, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let fam = CutoffFamily::new(radius)?;
    Ok((fam.value(x), fam.gradient(x), fam.hessian(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn plateau_and_support() {
        let (v, g, _) = eval_cutoff(1.0, &[0.5]).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g[0], 0.0);
        let (v, _, _) = eval_cutoff(1.0, &[0.75]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn transition_value_matches_profile() {
        // t = 0.625: s = 0.5, s³ = 0.125, value = exp(1 − 1/0.875)
        let (v, _, _) = eval_cutoff(1.0, &[0.625]).unwrap();
        let expect = (1.0_f64 - 1.0 / 0.875).exp();
        assert_relative_eq!(v, expect, epsilon = 1e-12);
        assert_relative_eq!(v, 0.86688, epsilon = 1e-5);
    }

    #[test]
    fn radius_below_one_rejected() {
        assert!(eval_cutoff(0.5, &[0.0]).is_err());
    }

    #[test]
    fn gradient_matches_closed_form() {
        let fam = CutoffFamily::new(2.0).unwrap();
        for x in [
            vec![1.1, 0.3],
            vec![-1.2, 0.4],
            vec![0.9, -0.9],
            vec![1.35, 0.1],
        ] {
            let g = fam.gradient(&x);
            let c = fam.gradient_closed_form(&x);
            for i in 0..2 {
                let scale = 1.0 + c[i].abs();
                assert!(
                    (g[i] - c[i]).abs() / scale < 1e-10,
                    "mismatch at {x:?}: {} vs {}",
                    g[i],
                    c[i]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fam = CutoffFamily::new(1.0).unwrap();
        let h = 1e-6;
        for &t in &[0.55, 0.6, 0.65, 0.7] {
            let d1_fd = (CutoffFamily::profile(t + h) - CutoffFamily::profile(t - h)) / (2.0 * h);
            assert_relative_eq!(CutoffFamily::profile_d1(t), d1_fd, epsilon = 1e-6);
            let d2_fd = (CutoffFamily::profile_d1(t + h) - CutoffFamily::profile_d1(t - h))
                / (2.0 * h);
            assert_relative_eq!(
                CutoffFamily::profile_d2(t),
                d2_fd,
                epsilon = 1e-4 * (1.0 + d2_fd.abs())
            );
            let _ = fam;
        }
    }

    proptest! {
        #[test]
        fn value_in_unit_range(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, r in 1.0f64..4.0) {
            let fam = CutoffFamily::new(r).unwrap();
            let v = fam.value(&[x0, x1]);
            prop_assert!((0.0..=1.0).contains(&v));
            let nx = (x0 * x0 + x1 * x1).sqrt();
            if nx <= r / 2.0 {
                prop_assert_eq!(v, 1.0);
            }
            if nx >= 0.75 * r {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
