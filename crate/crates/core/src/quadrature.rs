//! Gauss–Legendre rules and tensor-product cubature on `[-b, b]^d`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = (n + 1) / 2;
    for i in 0..half {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One-dimensional rule: Gauss–Legendre with `per_panel` nodes on each
/// interval between consecutive (sorted, deduplicated) breakpoints.
pub fn composite_rule(breaks: &[f64], per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(per_panel);
    let mut sorted: Vec<f64> = breaks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut nodes = Vec::with_capacity(per_panel * sorted.len());
    let mut weights = Vec::with_capacity(per_panel * sorted.len());
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(mid + half * x);
            weights.push(half * w);
        }
    }
    (nodes, weights)
}

/// Tensor-product cubature rule on the cube `[-b, b]^d`.
#[derive(Clone, Debug)]
pub struct TensorQuadrature {
    nodes: PointSet,
    weights: Vec<f64>,
}

impl TensorQuadrature {
    /// `n` Gauss–Legendre nodes per axis.
    pub fn gauss_legendre(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        Self::composite(dim, half_width, 1, n)
    }

    /// `panels` equal sub-intervals per axis, `per_panel` Gauss nodes each.
    pub fn composite(dim: usize, half_width: f64, panels: usize, per_panel: usize) -> Result<Self> {
        if dim == 0 || panels == 0 || per_panel == 0 || !(half_width > 0.0) {
            return Err(Error::invalid("quadrature needs positive dimension, panels, nodes and width"));
        }
        let breaks: Vec<f64> = (0..=panels)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / panels as f64)
            .collect();
        let (x, w) = composite_rule(&breaks, per_panel);
        Ok(Self::tensor(dim, &x, &w))
    }

    /// One-dimensional rule with panel breaks at the given interior points,
    /// so integrands with kinks there are integrated piecewise-smoothly.
    pub fn with_breakpoints(half_width: f64, interior: &[f64], per_panel: usize) -> Result<Self> {
        if per_panel == 0 || !(half_width > 0.0) {
            return Err(Error::invalid("quadrature needs positive nodes and width"));
        }
        let mut breaks = vec![-half_width, half_width];
        breaks.extend(interior.iter().copied().filter(|v| v.abs() < half_width));
        let (x, w) = composite_rule(&breaks, per_panel);
        Ok(Self::tensor(1, &x, &w))
    }

    fn tensor(dim: usize, x: &[f64], w: &[f64]) -> Self {
        let n = x.len();
        let total = n.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            coords.extend(idx.iter().map(|&i| x[i]));
            weights.push(idx.iter().map(|&i| w[i]).product());
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
        TensorQuadrature {
            nodes: PointSet::from_flat(dim, coords).expect("tensor grid is well formed"),
            weights,
        }
    }

    pub fn nodes(&self) -> &PointSet {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_rules_match_tabulated_values() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(w[0], 1.0, max_relative = 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[2], (0.6f64).sqrt(), max_relative = 1e-15);
        assert!(x[1].abs() < 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        for n in [1usize, 4, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-13);
            let deg = 2 * n - 2; // even degree below 2n
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(approx, 2.0 / (deg as f64 + 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn tensor_rule_integrates_separable_function() {
        let q = TensorQuadrature::composite(2, 1.5, 3, 8).unwrap();
        let v = q.integrate(|p| p[0].cos() * (2.0 * p[1]).exp());
        let expected = (2.0 * 1.5f64.sin()) * ((3.0f64).exp() - (-3.0f64).exp()) / 2.0;
        assert_relative_eq!(v, expected, max_relative = 1e-13);
    }

    #[test]
    fn breakpoint_rule_handles_kinks() {
        let q = TensorQuadrature::with_breakpoints(1.0, &[0.3], 6).unwrap();
        let v = q.integrate(|p| (p[0] - 0.3).abs());
        assert_relative_eq!(v, 0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7, max_relative = 1e-14);
    }
}
