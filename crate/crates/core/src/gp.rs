//! Gaussian-process regression with a known mean, a relative nugget and
//! maximum-likelihood length scales.
//!
//! Everything is stored on the correlation scale: with `C` the correlation
//! matrix of the design and `g` the relative nugget, the covariance is
//! `K + eta I = sigma2 (C + g I)`. The variance is profiled out of the
//! likelihood, `sigma2_hat = r^T (C + g I)^{-1} r / N`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{correlation_matrix, correlation_matrix_with_grad, cross_correlation, find_duplicate, KernelSpec, DUPLICATE_TOL};
use crate::linalg::{chol_append, chol_inverse, chol_log_det, chol_solve_vec, cholesky_with_jitter, solve_lower_in_place};
use crate::optim::{maximize, OptimOptions};
use crate::points::PointSet;

/// Relative nugget used for noiseless data.
pub const NOISELESS_NUGGET: f64 = 1e-10;

/// Known prior mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFn {
    #[default]
    Zero,
    Constant(f64),
}

impl MeanFn {
    pub fn eval(&self, _x: &[f64]) -> f64 {
        match *self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: PointSet,
    y: Vec<f64>,
    mean: MeanFn,
}

impl Dataset {
    pub fn new(points: PointSet, y: Vec<f64>, mean: MeanFn) -> Result<Self> {
        if points.len() != y.len() {
            return Err(Error::invalid(format!("{} points but {} responses", points.len(), y.len())));
        }
        if points.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if let Some((first, second)) = find_duplicate(&points) {
            return Err(Error::DuplicateDesign { first, second });
        }
        Ok(Dataset { points, y, mean })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn mean(&self) -> MeanFn {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// `y - mu(X)`.
    pub fn residuals(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.points.iter().zip(&self.y).map(|(x, y)| y - self.mean.eval(x)),
        )
    }

    fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() < DUPLICATE_TOL))
        {
            return Err(Error::DuplicateDesign {
                first: i,
                second: self.len(),
            });
        }
        self.points.push(x)?;
        self.y.push(y);
        Ok(())
    }
}

/// Box constraints on the hyperparameters (natural scale).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub nugget: (f64, f64),
}

impl HyperBounds {
    /// `ell in [1e-3 B, 10 B]`, `g in [1e-12, 1]`.
    pub fn for_domain(half_width: f64) -> Self {
        HyperBounds {
            lengthscale: (1e-3 * half_width, 10.0 * half_width),
            nugget: (1e-12, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub bounds: HyperBounds,
    pub fit_nugget: bool,
    /// Relative nugget when it is not fitted, and the starting value when it is.
    pub nugget: f64,
    /// Number of starts: the template's values plus random draws in the box.
    pub multistarts: usize,
    pub seed: u64,
    pub optim: OptimOptions,
}

impl FitOptions {
    pub fn for_domain(half_width: f64) -> Self {
        FitOptions {
            bounds: HyperBounds::for_domain(half_width),
            fit_nugget: false,
            nugget: NOISELESS_NUGGET,
            multistarts: 5,
            seed: 0,
            optim: OptimOptions::default(),
        }
    }
}

/// Profiled log-likelihood and its gradient with respect to each
/// `ln ell_k` followed by `ln g`.
#[derive(Clone, Debug)]
pub struct ProfiledLikelihood {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub sigma2: f64,
}

pub fn profiled_log_likelihood(spec: &KernelSpec, nugget: f64, data: &Dataset) -> Result<ProfiledLikelihood> {
    spec.validate()?;
    check_dim(spec.dim, data.dim())?;
    let n = data.len() as f64;
    let (c, dcs) = correlation_matrix_with_grad(spec, data.points());
    let (l, _) = cholesky_with_jitter(&c, nugget)?;
    let r = data.residuals();
    let alpha = chol_solve_vec(&l, &r);
    let quad = r.dot(&alpha);
    if !(quad > 0.0) {
        return Err(Error::NumericalInstability(format!("residual quadratic form {quad} is not positive")));
    }
    let sigma2 = quad / n;
    let value = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * chol_log_det(&l);
    let inv = chol_inverse(&l);
    let mut gradient = Vec::with_capacity(dcs.len() + 1);
    for dc in &dcs {
        let fit = alpha.dot(&(dc * &alpha)) / sigma2;
        let trace: f64 = inv.iter().zip(dc.iter()).map(|(a, b)| a * b).sum();
        gradient.push(0.5 * (fit - trace));
    }
    let trace_inv: f64 = inv.diagonal().sum();
    gradient.push(0.5 * nugget * (alpha.norm_squared() / sigma2 - trace_inv));
    Ok(ProfiledLikelihood { value, gradient, sigma2 })
}

/// Fitted GP on the correlation scale.
#[derive(Clone, Debug)]
pub struct GpModel {
    spec: KernelSpec,
    nugget: f64,
    jitter: f64,
    profile_variance: bool,
    data: Dataset,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    converged: bool,
}

impl GpModel {
    /// Model with every hyperparameter, including `spec.sigma2`, held fixed.
    pub fn fixed(spec: KernelSpec, nugget: f64, data: Dataset) -> Result<Self> {
        Self::build(spec, nugget, data, false)
    }

    /// Model with fixed length scales and nugget and the variance profiled.
    pub fn profiled(spec: KernelSpec, nugget: f64, data: Dataset) -> Result<Self> {
        Self::build(spec, nugget, data, true)
    }

    fn build(spec: KernelSpec, nugget: f64, data: Dataset, profile_variance: bool) -> Result<Self> {
        spec.validate()?;
        check_dim(spec.dim, data.dim())?;
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::invalid(format!("nugget must be nonnegative, got {nugget}")));
        }
        let c = correlation_matrix(&spec, data.points());
        let (chol, jitter) = cholesky_with_jitter(&c, nugget)?;
        let mut model = GpModel {
            spec,
            nugget,
            jitter,
            profile_variance,
            data,
            chol,
            alpha: DVector::zeros(0),
            converged: true,
        };
        model.refresh_weights()?;
        Ok(model)
    }

    fn refresh_weights(&mut self) -> Result<()> {
        let r = self.data.residuals();
        self.alpha = chol_solve_vec(&self.chol, &r);
        if self.profile_variance {
            let quad = r.dot(&self.alpha);
            let sigma2 = quad / self.data.len() as f64;
            if !(sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(Error::NumericalInstability(format!("profiled variance {sigma2} is not positive")));
            }
            self.spec.sigma2 = sigma2;
        }
        Ok(())
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn sigma2(&self) -> f64 {
        self.spec.sigma2
    }

    /// Relative nugget `g` as configured.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Extra diagonal added by the jitter ladder.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `g + jitter`, the relative nugget actually in the factor.
    pub fn effective_nugget(&self) -> f64 {
        self.nugget + self.jitter
    }

    /// Nugget on the covariance scale, `eta = sigma2 (g + jitter)`.
    pub fn eta(&self) -> f64 {
        self.spec.sigma2 * self.effective_nugget()
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn points(&self) -> &PointSet {
        self.data.points()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Lower Cholesky factor of `C + (g + jitter) I`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `(C + (g + jitter) I)^{-1} (y - mu)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Whether the likelihood optimizer reported convergence.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn log_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let r = self.data.residuals();
        let sigma2 = r.dot(&self.alpha) / n;
        -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * chol_log_det(&self.chol)
    }

    /// Posterior mean at every query point.
    pub fn posterior_mean_batch(&self, query: &PointSet) -> Result<Vec<f64>> {
        check_dim(self.spec.dim, query.dim())?;
        let cross = cross_correlation(&self.spec, self.points(), query);
        let fit = cross.tr_mul(&self.alpha);
        Ok(query.iter().zip(fit.iter()).map(|(x, f)| self.data.mean.eval(x) + f).collect())
    }

    pub fn posterior_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim, x.len())?;
        let q = PointSet::from_flat(self.spec.dim, x.to_vec())?;
        Ok(self.posterior_mean_batch(&q)?[0])
    }

    /// Posterior mean squared error at every query point.
    pub fn posterior_mse_batch(&self, query: &PointSet) -> Result<Vec<f64>> {
        check_dim(self.spec.dim, query.dim())?;
        let mut v = cross_correlation(&self.spec, self.points(), query);
        solve_lower_in_place(&self.chol, &mut v);
        v.column_iter()
            .map(|col| clamp_mse(self.spec.sigma2 * (1.0 - col.norm_squared()), self.spec.sigma2))
            .collect()
    }

    pub fn posterior_mse(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim, x.len())?;
        let q = PointSet::from_flat(self.spec.dim, x.to_vec())?;
        Ok(self.posterior_mse_batch(&q)?[0])
    }

    /// `P(t) = sqrt(mse(t))`.
    pub fn power_function(&self, t: &[f64]) -> Result<f64> {
        Ok(self.posterior_mse(t)?.sqrt())
    }

    /// Adds an observation keeping length scales and nugget; the variance is
    /// re-profiled when the model profiles it.
    pub fn append(&mut self, x: &[f64], y: f64) -> Result<()> {
        check_dim(self.spec.dim, x.len())?;
        self.data.push(x, y)?;
        let n = self.data.len() - 1;
        let corr = self.spec.correlation();
        let cross = DVector::from_iterator(n, self.data.points.iter().take(n).map(|p| corr.eval(p, x)));
        match chol_append(&self.chol, &cross, 1.0 + self.effective_nugget()) {
            Some(l) => self.chol = l,
            None => {
                let c = correlation_matrix(&self.spec, self.data.points());
                let (l, jitter) = cholesky_with_jitter(&c, self.nugget)?;
                self.chol = l;
                self.jitter = jitter;
            }
        }
        self.refresh_weights()
    }
}

/// Clamps round-off negatives; larger negatives are an error.
pub(crate) fn clamp_mse(mse: f64, sigma2: f64) -> Result<f64> {
    if mse >= 0.0 {
        Ok(mse)
    } else if mse >= -1e-10 * sigma2 {
        Ok(0.0)
    } else {
        Err(Error::NumericalInstability(format!("posterior variance {mse} is negative")))
    }
}

/// Maximum-likelihood fit of the length scales (and optionally the nugget),
/// with the variance profiled out. Starts from `template`'s length scales,
/// then from `multistarts - 1` random points in the box.
pub fn fit_mle(data: &Dataset, template: &KernelSpec, opts: &FitOptions) -> Result<GpModel> {
    template.validate()?;
    check_dim(template.dim, data.dim())?;
    let (lo_l, hi_l) = opts.bounds.lengthscale;
    let (lo_g, hi_g) = opts.bounds.nugget;
    if !(0.0 < lo_l && lo_l < hi_l) || (opts.fit_nugget && !(0.0 < lo_g && lo_g < hi_g)) {
        return Err(Error::invalid("hyperparameter bounds must be positive and nonempty"));
    }
    let p = template.n_lengthscales();
    let dims = p + usize::from(opts.fit_nugget);
    let mut lower = vec![lo_l.ln(); p];
    let mut upper = vec![hi_l.ln(); p];
    if opts.fit_nugget {
        lower.push(lo_g.ln());
        upper.push(hi_g.ln());
    }
    let unpack = |theta: &[f64]| {
        let spec = template.with_lengthscales(theta[..p].iter().map(|v| v.exp()).collect());
        let g = if opts.fit_nugget { theta[p].exp() } else { opts.nugget };
        (spec, g)
    };
    let objective = |theta: &[f64]| {
        let (spec, g) = unpack(theta);
        let lik = profiled_log_likelihood(&spec, g, data).ok()?;
        let mut grad = lik.gradient;
        if !opts.fit_nugget {
            grad.truncate(p);
        }
        Some((lik.value, grad))
    };

    let mut starts = Vec::with_capacity(opts.multistarts.max(1));
    let mut first: Vec<f64> = template.lengthscales.iter().map(|l| l.ln()).collect();
    if opts.fit_nugget {
        first.push(opts.nugget.max(lo_g).ln());
    }
    starts.push(first);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.multistarts {
        starts.push((0..dims).map(|k| rng.random_range(lower[k]..upper[k])).collect());
    }

    let mut best: Option<crate::optim::OptimResult> = None;
    for start in &starts {
        if let Some(r) = maximize(objective, start, &lower, &upper, &opts.optim) {
            if best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
    }
    let best = best.ok_or(Error::IllConditioned)?;
    if !best.converged {
        log::warn!("likelihood optimizer stopped after {} iterations without converging", best.iterations);
    }
    let (spec, g) = unpack(&best.x);
    let mut model = GpModel::profiled(spec, g, data.clone())?;
    model.converged = best.converged;
    Ok(model)
}
