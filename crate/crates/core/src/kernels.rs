//! Stationary kernel families: pointwise evaluation, covariance assembly,
//! length-scale derivatives and closed-form spectral densities.
//!
//! Spectral densities use the convention `S(w) = int k(h) exp(-i w.h) dh`, so
//! `k(0) = (2 pi)^{-d} int S(w) dw`.
//!
//! The anisotropic family is the product `sigma2 * prod_k c(x_k, x'_k; ell_k)` of
//! one-dimensional Matérn correlations. Its Fourier transform factorizes, so
//! its spectral density is `sigma2 * prod_k S_1(w_k; ell_k)` where `S_1` is the
//! one-dimensional unit-variance Matérn density.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;
use crate::special::{bessel_k, bessel_k_pair, ln_gamma};

/// Sup-norm distance below which two design points count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    /// Isotropic Matérn in the Euclidean distance.
    Matern,
    /// Product of one-dimensional Matérn kernels, one length scale per axis.
    MaternProduct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma2: f64,
    /// One entry for isotropic families, `dim` entries for `MaternProduct`.
    pub lengthscales: Vec<f64>,
    pub nu: Option<f64>,
    pub dim: usize,
}

impl KernelSpec {
    pub fn gaussian(dim: usize, sigma2: f64, lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            sigma2,
            lengthscales: vec![lengthscale],
            nu: None,
            dim,
        }
    }

    pub fn matern(dim: usize, sigma2: f64, lengthscale: f64, nu: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            sigma2,
            lengthscales: vec![lengthscale],
            nu: Some(nu),
            dim,
        }
    }

    pub fn matern_product(sigma2: f64, lengthscales: Vec<f64>, nu: f64) -> Self {
        KernelSpec {
            family: KernelFamily::MaternProduct,
            sigma2,
            dim: lengthscales.len(),
            lengthscales,
            nu: Some(nu),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        let expected = self.n_lengthscales();
        if self.lengthscales.len() != expected {
            return Err(Error::invalid(format!(
                "{:?} kernel in dimension {} needs {expected} length scale(s), got {}",
                self.family,
                self.dim,
                self.lengthscales.len()
            )));
        }
        if let Some(bad) = self.lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("length scales must be positive, got {bad}")));
        }
        match (self.family, self.nu) {
            (KernelFamily::Gaussian, _) => Ok(()),
            (_, Some(nu)) if nu > 0.0 && nu.is_finite() => Ok(()),
            (_, nu) => Err(Error::invalid(format!("Matérn smoothness must be positive, got {nu:?}"))),
        }
    }

    pub fn n_lengthscales(&self) -> usize {
        match self.family {
            KernelFamily::MaternProduct => self.dim,
            _ => 1,
        }
    }

    /// Same kernel with a different variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        KernelSpec { sigma2, ..self.clone() }
    }

    pub fn with_lengthscales(&self, lengthscales: Vec<f64>) -> Self {
        KernelSpec {
            lengthscales,
            ..self.clone()
        }
    }

    /// Geometric mean of the length scales.
    pub fn reference_lengthscale(&self) -> f64 {
        let n = self.lengthscales.len() as f64;
        (self.lengthscales.iter().map(|l| l.ln()).sum::<f64>() / n).exp()
    }

    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or(f64::INFINITY)
    }

    pub(crate) fn correlation(&self) -> Correlation {
        Correlation::new(self)
    }
}

/// One-dimensional Matérn profile of the scaled distance `z = sqrt(2 nu) r / ell`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MaternProfile {
    nu: f64,
    scale: f64,
    /// `ln(2^{1-nu} / Gamma(nu))`
    log_norm: f64,
}

impl MaternProfile {
    fn new(nu: f64) -> Self {
        MaternProfile {
            nu,
            scale: (2.0 * nu).sqrt(),
            log_norm: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
        }
    }

    /// Correlation at scaled distance `z >= 0`.
    fn corr(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 1.0;
        }
        if self.nu == 0.5 {
            (-z).exp()
        } else if self.nu == 1.5 {
            (1.0 + z) * (-z).exp()
        } else if self.nu == 2.5 {
            (1.0 + z + z * z / 3.0) * (-z).exp()
        } else if z > 740.0 {
            0.0
        } else {
            (self.log_norm + self.nu * z.ln()).exp() * bessel_k(self.nu, z)
        }
    }

    /// `(c, ell * dc/d ell)` at scaled distance `z`.
    fn corr_and_log_ell_grad(&self, z: f64) -> (f64, f64) {
        if z == 0.0 {
            return (1.0, 0.0);
        }
        let e = (-z).exp();
        if self.nu == 0.5 {
            (e, z * e)
        } else if self.nu == 1.5 {
            ((1.0 + z) * e, z * z * e)
        } else if self.nu == 2.5 {
            ((1.0 + z + z * z / 3.0) * e, z * z * (1.0 + z) * e / 3.0)
        } else if z > 740.0 {
            (0.0, 0.0)
        } else {
            // d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z)
            let pre = (self.log_norm + self.nu * z.ln()).exp();
            let (k_nu, k_nu_minus_1) = if self.nu >= 1.0 {
                let (a, b) = bessel_k_pair(self.nu - 1.0, z);
                (b, a)
            } else {
                (bessel_k(self.nu, z), bessel_k(1.0 - self.nu, z))
            };
            (pre * k_nu, pre * z * k_nu_minus_1)
        }
    }
}

/// Pre-computed correlation evaluator `c(x, x') = k(x, x') / sigma2`.
#[derive(Clone, Debug)]
pub(crate) enum Correlation {
    Gaussian { inv_two_ell2: f64 },
    Matern { profile: MaternProfile, inv_ell: f64 },
    Product { profile: MaternProfile, inv_ell: Vec<f64> },
}

impl Correlation {
    fn new(spec: &KernelSpec) -> Self {
        match spec.family {
            KernelFamily::Gaussian => {
                let l = spec.lengthscales[0];
                Correlation::Gaussian {
                    inv_two_ell2: 0.5 / (l * l),
                }
            }
            KernelFamily::Matern => Correlation::Matern {
                profile: MaternProfile::new(spec.nu()),
                inv_ell: 1.0 / spec.lengthscales[0],
            },
            KernelFamily::MaternProduct => Correlation::Product {
                profile: MaternProfile::new(spec.nu()),
                inv_ell: spec.lengthscales.iter().map(|l| 1.0 / l).collect(),
            },
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Correlation::Gaussian { inv_two_ell2 } => {
                (-crate::points::sq_dist(x, y) * inv_two_ell2).exp()
            }
            Correlation::Matern { profile, inv_ell } => {
                let r = crate::points::dist(x, y);
                profile.corr(profile.scale * r * inv_ell)
            }
            Correlation::Product { profile, inv_ell } => x
                .iter()
                .zip(y)
                .zip(inv_ell)
                .map(|((a, b), il)| profile.corr(profile.scale * (a - b).abs() * il))
                .product(),
        }
    }

    /// Correlation and its derivatives with respect to each `ln ell_k`.
    pub(crate) fn eval_with_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Correlation::Gaussian { inv_two_ell2 } => {
                let q = crate::points::sq_dist(x, y) * inv_two_ell2;
                let c = (-q).exp();
                grad[0] = 2.0 * q * c;
                c
            }
            Correlation::Matern { profile, inv_ell } => {
                let r = crate::points::dist(x, y);
                let (c, g) = profile.corr_and_log_ell_grad(profile.scale * r * inv_ell);
                grad[0] = g;
                c
            }
            Correlation::Product { profile, inv_ell } => {
                let d = inv_ell.len();
                let mut factors = [0.0f64; 8];
                let mut dfactors = [0.0f64; 8];
                let mut fv;
                let mut dv;
                let (f, df): (&mut [f64], &mut [f64]) = if d <= 8 {
                    (&mut factors[..d], &mut dfactors[..d])
                } else {
                    fv = vec![0.0; d];
                    dv = vec![0.0; d];
                    (&mut fv[..], &mut dv[..])
                };
                for k in 0..d {
                    let (c, g) =
                        profile.corr_and_log_ell_grad(profile.scale * (x[k] - y[k]).abs() * inv_ell[k]);
                    f[k] = c;
                    df[k] = g;
                }
                let total: f64 = f.iter().product();
                for k in 0..d {
                    let others: f64 = (0..d).filter(|&i| i != k).map(|i| f[i]).product();
                    grad[k] = df[k] * others;
                }
                total
            }
        }
    }
}

/// `k(x, x')`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_dim(spec.dim, x.len())?;
    check_dim(spec.dim, x_prime.len())?;
    Ok(spec.sigma2 * spec.correlation().eval(x, x_prime))
}

fn matern_log_const(dim: usize, nu: f64, ell: f64) -> f64 {
    let d = dim as f64;
    d * std::f64::consts::LN_2 + 0.5 * d * std::f64::consts::PI.ln() + ln_gamma(nu + 0.5 * d)
        - ln_gamma(nu)
        + nu * (2.0 * nu / (ell * ell)).ln()
}

/// Spectral density `S(w)` of the kernel.
pub fn spectral_density(spec: &KernelSpec, omega: &[f64]) -> Result<f64> {
    check_dim(spec.dim, omega.len())?;
    Ok(SpectralDensity::new(spec).eval(omega))
}

/// Spectral density with its normalizing constants pre-computed.
#[derive(Clone, Debug)]
pub struct SpectralDensity {
    family: KernelFamily,
    sigma2: f64,
    nu: f64,
    lengthscales: Vec<f64>,
    dim: usize,
    log_const: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(spec: &KernelSpec) -> Self {
        let d = spec.dim as f64;
        let log_const = match spec.family {
            KernelFamily::Gaussian => {
                let l = spec.lengthscales[0];
                vec![0.5 * d * (2.0 * std::f64::consts::PI).ln() + d * l.ln()]
            }
            KernelFamily::Matern => vec![matern_log_const(spec.dim, spec.nu(), spec.lengthscales[0])],
            KernelFamily::MaternProduct => spec
                .lengthscales
                .iter()
                .map(|&l| matern_log_const(1, spec.nu(), l))
                .collect(),
        };
        SpectralDensity {
            family: spec.family,
            sigma2: spec.sigma2,
            nu: spec.nu(),
            lengthscales: spec.lengthscales.clone(),
            dim: spec.dim,
            log_const,
        }
    }

    pub fn eval(&self, omega: &[f64]) -> f64 {
        let w2: f64 = omega.iter().map(|w| w * w).sum();
        match self.family {
            KernelFamily::Gaussian => {
                let l = self.lengthscales[0];
                self.sigma2 * (self.log_const[0] - 0.5 * l * l * w2).exp()
            }
            KernelFamily::Matern => {
                let l = self.lengthscales[0];
                let a = 2.0 * self.nu / (l * l);
                let p = self.nu + 0.5 * self.dim as f64;
                self.sigma2 * (self.log_const[0] - p * (a + w2).ln()).exp()
            }
            KernelFamily::MaternProduct => {
                let log: f64 = omega
                    .iter()
                    .zip(&self.lengthscales)
                    .zip(&self.log_const)
                    .map(|((w, l), c)| {
                        let a = 2.0 * self.nu / (l * l);
                        c - (self.nu + 0.5) * (a + w * w).ln()
                    })
                    .sum();
                self.sigma2 * log.exp()
            }
        }
    }

    /// `true` when the density factorizes over coordinates.
    pub fn is_separable(&self) -> bool {
        matches!(self.family, KernelFamily::Gaussian | KernelFamily::MaternProduct)
    }
}

/// Index pair of the first two design points closer than [`DUPLICATE_TOL`] in sup norm.
pub fn find_duplicate(points: &PointSet) -> Option<(usize, usize)> {
    let n = points.len();
    for i in 0..n {
        let a = points.point(i);
        for j in i + 1..n {
            let b = points.point(j);
            if a.iter().zip(b).all(|(u, v)| (u - v).abs() < DUPLICATE_TOL) {
                return Some((i, j));
            }
        }
    }
    None
}

/// `K_N + eta I`.
pub fn kernel_matrix(spec: &KernelSpec, points: &PointSet, eta: f64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_dim(spec.dim, points.dim())?;
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("nugget must be nonnegative, got {eta}")));
    }
    if let Some((first, second)) = find_duplicate(points) {
        return Err(Error::DuplicateDesign { first, second });
    }
    let mut k = correlation_matrix(spec, points);
    k *= spec.sigma2;
    for i in 0..points.len() {
        k[(i, i)] += eta;
    }
    Ok(k)
}

/// Correlation matrix `C_N` (unit diagonal).
pub(crate) fn correlation_matrix(spec: &KernelSpec, points: &PointSet) -> DMatrix<f64> {
    let corr = spec.correlation();
    let n = points.len();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = 1.0;
        let xj = points.point(j);
        for i in j + 1..n {
            let v = corr.eval(points.point(i), xj);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Correlation matrix and its derivatives with respect to each `ln ell_k`.
pub(crate) fn correlation_matrix_with_grad(
    spec: &KernelSpec,
    points: &PointSet,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let corr = spec.correlation();
    let n = points.len();
    let p = spec.n_lengthscales();
    let mut c = DMatrix::zeros(n, n);
    let mut grads = vec![DMatrix::zeros(n, n); p];
    let mut g = vec![0.0; p];
    for j in 0..n {
        c[(j, j)] = 1.0;
        let xj = points.point(j);
        for i in j + 1..n {
            let v = corr.eval_with_grad(points.point(i), xj, &mut g);
            c[(i, j)] = v;
            c[(j, i)] = v;
            for (dm, gv) in grads.iter_mut().zip(&g) {
                dm[(i, j)] = *gv;
                dm[(j, i)] = *gv;
            }
        }
    }
    (c, grads)
}

/// `C(X, Y)` with rows indexed by `x` and columns by `y`.
pub(crate) fn cross_correlation(spec: &KernelSpec, x: &PointSet, y: &PointSet) -> DMatrix<f64> {
    let corr = spec.correlation();
    let mut out = DMatrix::zeros(x.len(), y.len());
    for (j, yj) in y.iter().enumerate() {
        let mut col = out.column_mut(j);
        for (i, xi) in x.iter().enumerate() {
            col[i] = corr.eval(xi, yj);
        }
    }
    out
}
