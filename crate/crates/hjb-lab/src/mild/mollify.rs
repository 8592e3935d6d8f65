//! Mollified approximating problems: `φ_n = φ ⋆ ρ_n` and `ψ_n = ψ ⋆_z ρ_n`
//! (convolution in the gradient variable only), with a compactly supported
//! polynomial-free bump kernel of scale `1/n`.
//!
//! The kernel quadrature weights are normalised to sum to one and every node
//! offset stays strictly inside the `1/n` ball, so
//! `‖φ_n‖∞ ≤ ‖φ‖∞` and `|ψ_n(x,z) − ψ(x,z)| ≤ L_ψ/n` hold exactly, not just
//! up to quadrature error.

use super::HamiltonianSpec;
use crate::funcs::BoundedFn;
use crate::linalg::gauss_legendre;

/// Kernel quadrature nodes per axis.
const KERNEL_NODES: usize = 16;

#[derive(Debug, Clone)]
pub struct MollifierPair {
    pub n: u32,
    pub phi_n: BoundedFn,
    pub psi_n: HamiltonianSpec,
}

/// Normalised bump-kernel quadrature on `[-scale, scale]`:
/// nodes `u_i` with `|u_i| < scale` and weights summing to exactly one.
fn kernel_rule(scale: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(KERNEL_NODES);
    let bump = |u: f64| {
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    };
    let raw: Vec<f64> = nodes
        .iter()
        .zip(&weights)
        .map(|(u, w)| w * bump(*u))
        .collect();
    let total: f64 = raw.iter().sum();
    (
        nodes.iter().map(|u| u * scale).collect(),
        raw.iter().map(|w| w / total).collect(),
    )
}

/// Tensor offsets and weights for a `dim`-dimensional kernel whose support
/// stays inside the ball of radius `radius`.
fn tensor_rule(dim: usize, radius: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let per_axis = radius / (dim as f64).sqrt();
    let (nodes, weights) = kernel_rule(per_axis);
    let mut offsets: Vec<Vec<f64>> = vec![vec![]];
    let mut ws: Vec<f64> = vec![1.0];
    for _ in 0..dim {
        let mut next_off = Vec::with_capacity(offsets.len() * nodes.len());
        let mut next_w = Vec::with_capacity(ws.len() * weights.len());
        for (off, w) in offsets.iter().zip(&ws) {
            for (u, wu) in nodes.iter().zip(&weights) {
                let mut o = off.clone();
                o.push(*u);
                next_off.push(o);
                next_w.push(w * wu);
            }
        }
        offsets = next_off;
        ws = next_w;
    }
    (offsets, ws)
}

/// Build the `n`-mollified pair; `dim_x` and `dim_z` are the state and
/// gradient-variable dimensions.
pub fn mollify(
    phi: &BoundedFn,
    ham: &HamiltonianSpec,
    n: u32,
    dim_x: usize,
    dim_z: usize,
) -> MollifierPair {
    assert!(n >= 1);
    let radius = 1.0 / n as f64;

    let (x_offsets, x_weights) = tensor_rule(dim_x, radius);
    let phi_inner = phi.clone();
    let phi_n = BoundedFn::new(
        format!("{}~{}", phi.label(), n),
        phi.sup_bound(),
        move |x: &[f64]| {
            let mut acc = 0.0;
            let mut shifted = vec![0.0; x.len()];
            for (off, w) in x_offsets.iter().zip(&x_weights) {
                for d in 0..x.len() {
                    shifted[d] = x[d] - off[d];
                }
                acc += w * phi_inner.eval(&shifted);
            }
            acc
        },
    );

    let (z_offsets, z_weights) = tensor_rule(dim_z, radius);
    let ham_inner = ham.clone();
    let psi_n = HamiltonianSpec::new(
        format!("{}~{}", ham.label(), n),
        ham.lipschitz(),
        move |x: &[f64], z: &[f64]| {
            let mut acc = 0.0;
            let mut shifted = vec![0.0; z.len()];
            for (off, w) in z_offsets.iter().zip(&z_weights) {
                for d in 0..z.len() {
                    shifted[d] = z[d] - off[d];
                }
                acc += w * ham_inner.eval(x, &shifted);
            }
            acc
        },
    );

    MollifierPair { n, phi_n, psi_n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_datum_is_fixed() {
        let phi = BoundedFn::constant(2.5);
        let ham = HamiltonianSpec::zero();
        for n in [1, 2, 8] {
            let pair = mollify(&phi, &ham, n, 1, 1);
            for x in [-3.0, 0.0, 1.7] {
                assert!((pair.phi_n.eval(&[x]) - 2.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sup_bound_not_exceeded_on_samples() {
        let phi = BoundedFn::cosine();
        let ham = HamiltonianSpec::zero();
        let pair = mollify(&phi, &ham, 4, 1, 1);
        for i in 0..200 {
            let x = -4.0 + 8.0 * i as f64 / 199.0;
            assert!(pair.phi_n.eval(&[x]).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn psi_gap_bounded_by_lipschitz_over_n() {
        // |ψ_n(x,z) − ψ(x,z)| ≤ L_ψ/n at a thousand sampled points.
        let l = 1.0;
        let ham = HamiltonianSpec::new("neg-abs", l, |_x: &[f64], z: &[f64]| {
            -z.iter().map(|v| v.abs()).sum::<f64>()
        });
        let phi = BoundedFn::cosine();
        let mut rng = crate::rng::stream(3, &[0x77]);
        for n in [2u32, 4, 16] {
            let pair = mollify(&phi, &ham, n, 1, 1);
            for _ in 0..1000 {
                let x = [rng.random_range(-3.0..3.0)];
                let z = [rng.random_range(-3.0..3.0)];
                let gap = (pair.psi_n.eval(&x, &z) - ham.eval(&x, &z)).abs();
                assert!(
                    gap <= l / n as f64 + 1e-14,
                    "n = {n}: gap {gap} exceeds {}",
                    l / n as f64
                );
            }
        }
    }

    #[test]
    fn mollified_cosine_converges_quadratically() {
        let phi = BoundedFn::cosine();
        let ham = HamiltonianSpec::zero();
        let gap = |n: u32| {
            let pair = mollify(&phi, &ham, n, 1, 1);
            (0..100)
                .map(|i| {
                    let x = -3.0 + 6.0 * i as f64 / 99.0;
                    (pair.phi_n.eval(&[x]) - x.cos()).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let g2 = gap(2);
        let g4 = gap(4);
        let g8 = gap(8);
        assert!(g4 < g2 && g8 < g4, "gaps must decrease: {g2} {g4} {g8}");
        assert!(g8 < g2 / 8.0, "roughly quadratic decay expected");
    }
}
