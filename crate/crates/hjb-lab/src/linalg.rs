//! Small dense linear-algebra helpers on top of nalgebra, plus Gaussian
//! quadrature rules built by Golub–Welsch.
//!
//! Coefficient matrices here are tiny (the state dimension), so symmetric
//! eigendecompositions are cheap and we never reach for an external LAPACK.

use nalgebra::DMatrix;

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest eigenvalue of the symmetric part of `a`.
pub fn lambda_max_sym(a: &DMatrix<f64>) -> f64 {
    let eig = sym_part(a).symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn lambda_min_sym(a: &DMatrix<f64>) -> f64 {
    let eig = sym_part(a).symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Principal square root of a symmetric positive-definite matrix.
///
/// Panics if an eigenvalue is negative beyond roundoff; callers construct
/// these matrices from positive-definite inputs.
pub fn sqrtm_spd(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_part(q).symmetric_eigen();
    let mut d = DMatrix::zeros(q.nrows(), q.ncols());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        assert!(
            lam > -1e-12 * (1.0 + lam.abs()),
            "sqrtm_spd: negative eigenvalue {lam}"
        );
        d[(i, i)] = lam.max(0.0).sqrt();
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Spectral condition number of a square matrix, via the eigenvalues of
/// `AᵀA`. Returns `f64::INFINITY` for a numerically singular matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}

/// Inverse of a small square matrix; `None` when singular.
pub fn invert(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().try_inverse()
}

/// Frobenius norm.
pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean norm of a slice.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product of two slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = offdiag[i];
            j[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let node = eig.eigenvalues[k];
            let first = eig.eigenvectors[(0, k)];
            (node, mu0 * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &offdiag, 2.0)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Gauss–Hermite rule for expectations against the standard normal density:
/// `E f(Z) ≈ Σ w_i f(z_i)` with the weights summing to one.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&diag, &offdiag, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrtm_recovers_matrix() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = sqrtm_spd(&q);
        let back = &g * &g;
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(back[(i, j)], q[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        // 5-node rule is exact through degree 9.
        let (xs, ws) = gauss_legendre(5);
        let int_x8: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(int_x8, 2.0 / 9.0, epsilon = 1e-12);
        let total: f64 = ws.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (zs, ws) = gauss_hermite_normal(12);
        let m0: f64 = ws.iter().sum();
        let m2: f64 = zs.iter().zip(&ws).map(|(z, w)| w * z * z).sum();
        let m4: f64 = zs.iter().zip(&ws).map(|(z, w)| w * z.powi(4)).sum();
        assert_relative_eq!(m0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m4, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn condition_number_of_identity() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(condition_number(&id), 1.0, epsilon = 1e-12);
    }
}
