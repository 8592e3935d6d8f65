//! Bounded scalar functions of the state, carried together with a sup bound.
//!
//! Terminal data and test functions are passed around as [`BoundedFn`]; the
//! sup bound feeds the theoretical constants (contraction windows, ball radii)
//! and the zero-variance shortcuts.

use std::fmt;
use std::sync::Arc;

/// A bounded function `ℝ^N → ℝ` with a known sup-norm bound.
#[derive(Clone)]
pub struct BoundedFn {
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    sup: f64,
    label: String,
}

impl fmt::Debug for BoundedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundedFn({}, sup={})", self.label, self.sup)
    }
}

impl BoundedFn {
    pub fn new(
        label: impl Into<String>,
        sup: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            sup,
            label: label.into(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Known bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        self.sup
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `x ↦ cos(x_1)`.
    pub fn cosine() -> Self {
        Self::new("cos", 1.0, |x: &[f64]| x[0].cos())
    }

    /// `x ↦ tanh(scale · x_1)`; steep scales approximate a sign function.
    pub fn tanh_scaled(scale: f64) -> Self {
        Self::new(format!("tanh({scale}*x)"), 1.0, move |x: &[f64]| {
            (scale * x[0]).tanh()
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), c.abs(), move |_: &[f64]| c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        assert_eq!(BoundedFn::cosine().eval(&[0.0]), 1.0);
        assert_eq!(BoundedFn::constant(3.0).eval(&[5.0, 1.0]), 3.0);
        assert!(BoundedFn::tanh_scaled(50.0).eval(&[1.0]) > 0.999);
        assert_eq!(BoundedFn::tanh_scaled(50.0).sup_bound(), 1.0);
    }
}
