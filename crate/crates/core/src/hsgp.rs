//! Dirichlet–Laplacian sine basis on `(-L, L)^d` and the truncated
//! reduced-rank kernel approximation built on it.
//!
//! Basis functions are indexed by multi-indices `j` in `{1..m}^d`, flattened
//! row-major (the last coordinate varies fastest), so the flat index of `j` is
//! `sum_k (j_k - 1) m^(d-1-k)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{KernelSpec, SpectralDensity};
use crate::points::PointSet;

#[derive(Clone, Debug)]
pub struct HsgpBasis {
    dim: usize,
    m: usize,
    half_width: f64,
    weights: Vec<f64>,
}

impl HsgpBasis {
    /// Basis with `m` functions per axis on `(-half_width, half_width)^d`,
    /// weighted by the spectral density of `spec`.
    pub fn new(spec: &KernelSpec, m: usize, half_width: f64) -> Result<Self> {
        spec.validate()?;
        if m == 0 {
            return Err(Error::invalid("basis size per axis must be positive"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid(format!("expansion half-width must be positive, got {half_width}")));
        }
        let total = checked_total(m, spec.dim)?;
        let density = SpectralDensity::new(spec);
        let step = PI / (2.0 * half_width);
        let mut weights = Vec::with_capacity(total);
        let mut omega = vec![0.0; spec.dim];
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..spec.dim).rev() {
                omega[k] = step * ((rem % m) + 1) as f64;
                rem /= m;
            }
            weights.push(density.eval(&omega));
        }
        Ok(HsgpBasis {
            dim: spec.dim,
            m,
            half_width,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Functions per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Half-width `L` of the expansion domain.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of basis functions, `m^d`.
    pub fn size(&self) -> usize {
        self.weights.len()
    }

    /// Spectral weights in flattened order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Multi-index (1-based) of a flat position.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = flat;
        for k in (0..self.dim).rev() {
            idx[k] = rem % self.m + 1;
            rem /= self.m;
        }
        idx
    }

    /// Flat position of a multi-index (1-based).
    pub fn flat_index(&self, j: &[usize]) -> Result<usize> {
        check_dim(self.dim, j.len())?;
        let mut flat = 0;
        for &jk in j {
            if jk == 0 || jk > self.m {
                return Err(Error::invalid(format!("basis index {jk} outside 1..={}", self.m)));
            }
            flat = flat * self.m + (jk - 1);
        }
        Ok(flat)
    }

    /// Angular frequency vector of a multi-index.
    pub fn frequency(&self, j: &[usize]) -> Vec<f64> {
        j.iter().map(|&jk| PI * jk as f64 / (2.0 * self.half_width)).collect()
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if x.iter().any(|v| v.abs() > self.half_width) {
            return Err(Error::OutsideDomain {
                point: x.to_vec(),
                half_width: self.half_width,
            });
        }
        Ok(())
    }

    /// `phi_j(x) = L^{-d/2} prod_k sin(pi j_k (x_k + L) / 2L)`.
    pub fn eigenfunction(&self, j: &[usize], x: &[f64]) -> Result<f64> {
        self.flat_index(j)?;
        self.check_inside(x)?;
        let l = self.half_width;
        let v: f64 = j
            .iter()
            .zip(x)
            .map(|(&jk, &xk)| (PI * jk as f64 * (xk + l) / (2.0 * l)).sin())
            .product();
        Ok(v * l.powf(-0.5 * self.dim as f64))
    }

    /// Per-axis sine values `sin(pi j (x_k + L) / 2L)` for `j = 1..=m`,
    /// laid out axis after axis.
    fn axis_values(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        let l = self.half_width;
        for (k, &xk) in x.iter().enumerate() {
            let theta = PI * (xk + l) / (2.0 * l);
            for (j, slot) in out[k * m..(k + 1) * m].iter_mut().enumerate() {
                *slot = ((j + 1) as f64 * theta).sin();
            }
        }
    }

    /// Writes `phi(x)` (length `m^d`, flattened order) into `out`.
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_inside(x)?;
        debug_assert_eq!(out.len(), self.size());
        let m = self.m;
        let mut axis = vec![0.0; m * self.dim];
        self.axis_values(x, &mut axis);
        let scale = self.half_width.powf(-0.5 * self.dim as f64);
        // expand the Kronecker product axis by axis
        out[..m].iter_mut().zip(&axis[..m]).for_each(|(o, a)| *o = a * scale);
        let mut len = m;
        for k in 1..self.dim {
            let ax = &axis[k * m..(k + 1) * m];
            for i in (0..len).rev() {
                let v = out[i];
                let base = i * m;
                for (j, a) in ax.iter().enumerate() {
                    out[base + j] = v * a;
                }
            }
            len *= m;
        }
        Ok(())
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.features_into(x, &mut out)?;
        Ok(out)
    }

    /// Truncated approximation `sum_j W_j phi_j(x) phi_j(x')`.
    pub fn khat(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        let a = self.features(x)?;
        let b = self.features(x_prime)?;
        Ok(a.iter()
            .zip(&b)
            .zip(&self.weights)
            .map(|((u, v), w)| w * u * v)
            .sum())
    }

    /// Design matrix `Phi` with `Phi[n, i] = phi_i(x_n)` (N x M).
    pub fn design_matrix(&self, points: &PointSet) -> Result<DMatrix<f64>> {
        Ok(self.design_matrix_transposed(points)?.transpose())
    }

    /// `Phi^T` (M x N), one column of features per point.
    pub fn design_matrix_transposed(&self, points: &PointSet) -> Result<DMatrix<f64>> {
        check_dim(self.dim, points.dim())?;
        let mut out = DMatrix::zeros(self.size(), points.len());
        for (n, x) in points.iter().enumerate() {
            self.features_into(x, out.column_mut(n).as_mut_slice())?;
        }
        Ok(out)
    }

    /// One-dimensional Gram matrix `G1[p, q] = int_{-b}^{b} phi_p phi_q dx`.
    pub fn gram_g1(&self, b: f64) -> Result<DMatrix<f64>> {
        gram_g1(self.m, self.half_width, b)
    }
}

fn checked_total(m: usize, dim: usize) -> Result<usize> {
    m.checked_pow(dim as u32)
        .filter(|&t| t <= 1 << 28)
        .ok_or_else(|| Error::invalid(format!("basis of size {m}^{dim} is too large")))
}

/// Closed-form one-dimensional Gram matrix of the sine basis on `(-l, l)`
/// integrated over `(-b, b)`.
pub fn gram_g1(m: usize, l: f64, b: f64) -> Result<DMatrix<f64>> {
    if !(b > 0.0) || b > l {
        return Err(Error::invalid(format!("integration half-width {b} must lie in (0, {l}]")));
    }
    let mut g = DMatrix::zeros(m, m);
    let lo = l - b;
    let hi = l + b;
    for p in 1..=m {
        let pf = p as f64;
        g[(p - 1, p - 1)] = b / l
            - ((PI * pf * hi / l).sin() - (PI * pf * lo / l).sin()) / (2.0 * PI * pf);
        for q in p + 1..=m {
            let qf = q as f64;
            let diff = pf - qf;
            let sum = pf + qf;
            let term = |s: f64| {
                (PI * diff * s / (2.0 * l)).sin() / diff - (PI * sum * s / (2.0 * l)).sin() / sum
            };
            let v = (term(hi) - term(lo)) / PI;
            g[(p - 1, q - 1)] = v;
            g[(q - 1, p - 1)] = v;
        }
    }
    Ok(g)
}

/// `(G1 ⊗ ... ⊗ G1) v` with `d` factors, via mode-wise products.
pub fn apply_gd(g1: &DMatrix<f64>, v: &[f64], dim: usize) -> Result<Vec<f64>> {
    let m = g1.nrows();
    let total = m.pow(dim as u32);
    if v.len() != total {
        return Err(Error::invalid(format!(
            "vector of length {} does not match {m}^{dim} = {total}",
            v.len()
        )));
    }
    let mut x = DMatrix::from_column_slice(total, 1, v);
    let mut scratch = DMatrix::zeros(total, 1);
    apply_gd_columns(g1, dim, &mut x, &mut scratch);
    Ok(x.as_slice().to_vec())
}

/// Applies `G1^{⊗d}` to every column of `x` in place. `scratch` must have
/// the same shape and is overwritten. `g1` must be symmetric.
pub fn apply_gd_columns(g1: &DMatrix<f64>, dim: usize, x: &mut DMatrix<f64>, scratch: &mut DMatrix<f64>) {
    let m = g1.nrows();
    let total = x.nrows();
    let cols = x.ncols();
    debug_assert_eq!(total, m.pow(dim as u32));
    debug_assert_eq!(scratch.shape(), x.shape());
    for k in 0..dim {
        let inner = m.pow((dim - 1 - k) as u32);
        let src = x.as_slice();
        let dst = scratch.as_mut_slice();
        if inner == 1 {
            // the contracted axis is contiguous: one GEMM over everything
            let xv = DMatrixView::from_slice(src, m, total / m * cols);
            let mut yv = DMatrixViewMut::from_slice(dst, m, total / m * cols);
            yv.gemm(1.0, g1, &xv, 0.0);
        } else {
            let block = inner * m;
            for (s, d) in src.chunks_exact(block).zip(dst.chunks_exact_mut(block)) {
                let xv = DMatrixView::from_slice(s, inner, m);
                let mut yv = DMatrixViewMut::from_slice(d, inner, m);
                yv.gemm(1.0, &xv, g1, 0.0);
            }
        }
        std::mem::swap(x, scratch);
    }
}

/// Basis size and expansion half-width from the sample size:
/// `m = ceil(20 d + 0.1 (B / ell) ln N)`, `L = B + 0.5 (ell / B) ln N`.
pub fn default_params(n: usize, dim: usize, b: f64, ell_ref: f64) -> (usize, f64) {
    let ln_n = (n.max(2) as f64).ln();
    default_params_ln(ln_n, dim, b, ell_ref)
}

pub(crate) fn default_params_ln(ln_n: f64, dim: usize, b: f64, ell_ref: f64) -> (usize, f64) {
    let m = (20.0 * dim as f64 + 0.1 * (b / ell_ref) * ln_n).ceil() as usize;
    let l = b + 0.5 * (ell_ref / b) * ln_n;
    (m.max(1), l)
}
