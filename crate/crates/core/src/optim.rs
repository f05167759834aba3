//! Box-constrained quasi-Newton maximization (projected BFGS with Armijo
//! backtracking).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient's sup norm falls below this.
    pub grad_tol: f64,
    /// Stop when an iteration improves the objective by less than this (relative).
    pub value_tol: f64,
    /// Largest allowed step in any coordinate.
    pub max_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iter: 100,
            grad_tol: 1e-6,
            value_tol: 1e-10,
            max_step: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Coordinates pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi <= lo && gi < 0.0) || (xi >= hi && gi > 0.0))
        .collect()
}

/// Maximizes `f` over the box `[lower, upper]` starting from `x0`.
/// `f` returns the value and gradient, or `None` where it is undefined;
/// undefined points are treated as infinitely bad by the line search.
pub fn maximize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &OptimOptions) -> Option<OptimResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut gx) = f(&x)?;
    // inverse Hessian approximation of -f
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let active = active_set(&x, &gx, lower, upper);
        let pg: f64 = gx
            .iter()
            .zip(&active)
            .map(|(g, &a)| if a { 0.0 } else { g.abs() })
            .fold(0.0, f64::max);
        if pg < opts.grad_tol {
            converged = true;
            break;
        }
        let mut p: Vec<f64> = (0..n)
            .map(|i| if active[i] { 0.0 } else { (0..n).filter(|&j| !active[j]).map(|j| h[i][j] * gx[j]).sum() })
            .collect();
        if p.iter().zip(&gx).map(|(a, b)| a * b).sum::<f64>() <= 0.0 {
            // lost ascent: reset curvature and use the projected gradient
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            p = (0..n).map(|i| if active[i] { 0.0 } else { gx[i] }).collect();
        }
        let biggest = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if biggest > opts.max_step {
            p.iter_mut().for_each(|v| *v *= opts.max_step / biggest);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            project(&mut trial, lower, upper);
            let gain: f64 = gx.iter().zip(trial.iter().zip(&x)).map(|(g, (t, a))| g * (t - a)).sum();
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft >= fx + 1e-4 * gain {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no progress along the search direction
            converged = pg < opts.grad_tol.sqrt();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // gradient change of -f
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| b - a).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let improvement = fn_ - fx;
        x = xn;
        fx = fn_;
        gx = gn;
        if improvement.abs() <= opts.value_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Some(OptimResult {
        x,
        value: fx,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum_of_quadratic() {
        let f = |x: &[f64]| {
            let v = -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 0.5).powi(2) - x[0] * x[1];
            Some((v, vec![-2.0 * (x[0] - 1.0) - x[1], -6.0 * (x[1] + 0.5) - x[0]]))
        };
        let r = maximize(f, &[0.0, 0.0], &[-5.0, -5.0], &[5.0, 5.0], &OptimOptions::default()).unwrap();
        assert!(r.converged);
        let gx = -2.0 * (r.x[0] - 1.0) - r.x[1];
        let gy = -6.0 * (r.x[1] + 0.5) - r.x[0];
        assert!(gx.abs() < 1e-5 && gy.abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn stops_on_active_bound() {
        let f = |x: &[f64]| Some((x[0] - x[1] * x[1], vec![1.0, -2.0 * x[1]]));
        let r = maximize(f, &[0.0, 0.7], &[-1.0, -1.0], &[2.0, 1.0], &OptimOptions::default()).unwrap();
        assert_eq!(r.x[0], 2.0);
        assert!(r.x[1].abs() < 1e-5);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let ga = 2.0 * (1.0 - a) + 400.0 * a * (b - a * a);
            let gb = -200.0 * (b - a * a);
            Some((v, vec![ga, gb]))
        };
        let opts = OptimOptions {
            max_iter: 500,
            value_tol: 0.0,
            ..Default::default()
        };
        let r = maximize(f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }
}
