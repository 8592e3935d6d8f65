//! Quasi-random point sets and running statistics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::norm;
use crate::rng;

const HALTON_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Van der Corput radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut frac = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * frac;
        index /= base;
        frac /= base as f64;
    }
    result
}

/// Halton sequence points in the cube `[-1, 1]^dim`, skipping a short burn-in.
pub fn halton_cube(dim: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(dim <= HALTON_PRIMES.len(), "halton_cube supports dim <= 8");
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| 2.0 * radical_inverse((i + 17) as u64, HALTON_PRIMES[d]) - 1.0)
                .collect()
        })
        .collect()
}

/// Quasi-random points filling the ball of the given radius: Halton cube
/// points kept inside the unit ball and rescaled.
pub fn ball_points(dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    while out.len() < count {
        let batch = halton_cube(dim, (i + 1) * count * 2);
        for p in batch.into_iter().skip(i * count * 2) {
            if norm(&p) <= 1.0 {
                out.push(p.iter().map(|v| v * radius).collect());
                if out.len() == count {
                    break;
                }
            }
        }
        i += 1;
    }
    out
}

/// Points marching toward infinity: `directions` random unit vectors, each
/// sampled at radii `base_radius * 2^k` for `k = 0..shells`.
pub fn ray_points(
    dim: usize,
    base_radius: f64,
    directions: usize,
    shells: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, &[0x5ca1e]);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(directions);
    // Always include the coordinate axes; growth often concentrates there.
    for d in 0..dim.min(directions) {
        let mut e = vec![0.0; dim];
        e[d] = 1.0;
        dirs.push(e);
    }
    while dirs.len() < directions {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            dirs.push(v.iter().map(|x| x / n).collect());
        }
    }
    let mut out = Vec::with_capacity(directions * shells);
    for dir in &dirs {
        for k in 0..shells {
            let r = base_radius * (1u64 << k) as f64;
            out.push(dir.iter().map(|x| x * r).collect());
        }
    }
    out
}

/// Online mean / variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.std_dev() / (self.n as f64).sqrt()
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_points_stay_inside() {
        let pts = ball_points(3, 2.5, 200);
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|p| norm(p) <= 2.5 + 1e-12));
    }

    #[test]
    fn ray_points_reach_out() {
        let pts = ray_points(2, 1.0, 4, 5, 9);
        assert_eq!(pts.len(), 20);
        let max_r = pts.iter().map(|p| norm(p)).fold(0.0f64, f64::max);
        assert_relative_eq!(max_r, 16.0, epsilon = 1e-9);
    }

    #[test]
    fn running_stats_match_direct() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let mut s = RunningStats::new();
        for &x in &xs {
            s.push(x);
        }
        assert_relative_eq!(s.mean(), 3.75, epsilon = 1e-12);
        assert_relative_eq!(s.variance(), 9.583333333333334, epsilon = 1e-12);
        assert_eq!(s.count(), 4);
    }
}
