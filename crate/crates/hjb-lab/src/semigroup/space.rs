//! Spatial evaluation sets shared by value slices: tensor grids in one and
//! two dimensions, scattered quasi-random points otherwise. Interpolation is
//! plain linear (clamped at the hull) — slices are dense enough that nothing
//! fancier pays off.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SpatialSet {
    /// Sorted 1-D grid.
    Grid1d { xs: Vec<f64> },
    /// Tensor grid, point index `i * ys.len() + j ↦ (xs[i], ys[j])`.
    Grid2d { xs: Vec<f64>, ys: Vec<f64> },
    Scattered { dim: usize, points: Vec<Vec<f64>> },
}

impl SpatialSet {
    /// Uniform 1-D grid with `n` nodes on `[a, b]`.
    pub fn uniform_1d(a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2 && b > a);
        let step = (b - a) / (n - 1) as f64;
        SpatialSet::Grid1d {
            xs: (0..n).map(|i| a + i as f64 * step).collect(),
        }
    }

    pub fn uniform_2d(a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2 && b > a);
        let step = (b - a) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
        SpatialSet::Grid2d {
            xs: xs.clone(),
            ys: xs,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpatialSet::Grid1d { .. } => 1,
            SpatialSet::Grid2d { .. } => 2,
            SpatialSet::Scattered { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SpatialSet::Grid1d { xs } => xs.len(),
            SpatialSet::Grid2d { xs, ys } => xs.len() * ys.len(),
            SpatialSet::Scattered { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        match self {
            SpatialSet::Grid1d { xs } => vec![xs[i]],
            SpatialSet::Grid2d { xs, ys } => {
                vec![xs[i / ys.len()], ys[i % ys.len()]]
            }
            SpatialSet::Scattered { points, .. } => points[i].clone(),
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn in_hull(&self, x: &[f64]) -> bool {
        match self {
            SpatialSet::Grid1d { xs } => x[0] >= xs[0] && x[0] <= *xs.last().unwrap(),
            SpatialSet::Grid2d { xs, ys } => {
                x[0] >= xs[0]
                    && x[0] <= *xs.last().unwrap()
                    && x[1] >= ys[0]
                    && x[1] <= *ys.last().unwrap()
            }
            SpatialSet::Scattered { points, .. } => {
                // Bounding-box hull for scattered sets.
                (0..self.dim()).all(|d| {
                    let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                    let hi = points
                        .iter()
                        .map(|p| p[d])
                        .fold(f64::NEG_INFINITY, f64::max);
                    x[d] >= lo && x[d] <= hi
                })
            }
        }
    }

    /// Interpolate nodal `values` at `x`, clamping outside the hull.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        match self {
            SpatialSet::Grid1d { xs } => interp_1d(xs, values, x[0]),
            SpatialSet::Grid2d { xs, ys } => {
                let ny = ys.len();
                let (i0, i1, tx) = bracket(xs, x[0]);
                let (j0, j1, ty) = bracket(ys, x[1]);
                let v00 = values[i0 * ny + j0];
                let v01 = values[i0 * ny + j1];
                let v10 = values[i1 * ny + j0];
                let v11 = values[i1 * ny + j1];
                (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
            }
            SpatialSet::Scattered { points, .. } => {
                // Inverse-distance-squared over the four nearest nodes.
                let mut best: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d2, i)
                    })
                    .collect();
                best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let k = best.len().min(4);
                if best[0].0 < 1e-24 {
                    return values[best[0].1];
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for &(d2, i) in &best[..k] {
                    let w = 1.0 / d2;
                    num += w * values[i];
                    den += w;
                }
                num / den
            }
        }
    }
}

fn bracket(xs: &[f64], x: f64) -> (usize, usize, f64) {
    let n = xs.len();
    if x <= xs[0] {
        return (0, 0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let idx = xs.partition_point(|&v| v <= x).min(n - 1);
    let i0 = idx - 1;
    let t = (x - xs[i0]) / (xs[idx] - xs[i0]);
    (i0, idx, t)
}

fn interp_1d(xs: &[f64], values: &[f64], x: f64) -> f64 {
    let (i0, i1, t) = bracket(xs, x);
    (1.0 - t) * values[i0] + t * values[i1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid1d_linear_interpolation_is_exact_on_lines() {
        let set = SpatialSet::uniform_1d(-1.0, 1.0, 5);
        let values: Vec<f64> = set.points().iter().map(|p| 2.0 * p[0] + 1.0).collect();
        assert_relative_eq!(set.interpolate(&values, &[0.3]), 1.6, epsilon = 1e-12);
        // clamped
        assert_relative_eq!(set.interpolate(&values, &[5.0]), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn grid2d_bilinear() {
        let set = SpatialSet::uniform_2d(0.0, 1.0, 3);
        let values: Vec<f64> = set.points().iter().map(|p| p[0] + 10.0 * p[1]).collect();
        assert_relative_eq!(
            set.interpolate(&values, &[0.25, 0.75]),
            0.25 + 7.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn scattered_reproduces_nodes() {
        let set = SpatialSet::Scattered {
            dim: 2,
            points: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let values = vec![1.0, 2.0, 3.0];
        assert_relative_eq!(set.interpolate(&values, &[1.0, 0.0]), 2.0);
    }
}
