//! Sequential sampling loops and the Latin hypercube baseline.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{default_grid_per_dim, imse_quadrature_batch, AcquisitionContext, FeasibilityState};
use crate::error::{check_dim, Error, Result};
use crate::gp::{fit_mle, Dataset, FitOptions, GpModel};
use crate::hsgp::default_params;
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::quadrature::TensorQuadrature;
use crate::rng::{derive_seed, purpose, stream};

/// Latin hypercube sample of `n` points in `(-b, b)^d`: each axis is cut
/// into `n` equal strata, a random permutation assigns strata to points and
/// each coordinate is uniform within its stratum.
pub fn lhs_sample<R: Rng + ?Sized>(n: usize, dim: usize, half_width: f64, rng: &mut R) -> Result<PointSet> {
    if dim == 0 || !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::invalid("LHS needs a positive dimension and half-width"));
    }
    let mut coords = vec![0.0; n * dim];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..dim {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.sample(Open01);
            coords[i * dim + k] = -half_width + 2.0 * half_width * (stratum as f64 + u) / n as f64;
        }
    }
    PointSet::from_flat(dim, coords)
}

/// Default candidate-set size `max(512, 50 d)`.
pub fn default_candidate_count(dim: usize) -> usize {
    512.max(50 * dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMode {
    /// Closed-form reduced-rank IMSE.
    HsgpClosedForm,
    /// IMSE by numerical integration.
    QuadratureExact,
    /// Next point of a fixed Latin hypercube batch; no acquisition.
    LhsBaseline,
}

/// How the basis size `m` and half-width `L` are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsgpSchedule {
    /// Recomputed every iteration from the sample size and the fitted
    /// length scale (see [`default_params`]).
    Adaptive,
    Fixed { m: usize, half_width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyperparameters {
    /// Use the configured kernel as is, with this relative nugget.
    Fixed { nugget: f64 },
    /// Maximum likelihood, with the configured kernel as the first start.
    Estimated(FitOptions),
}

/// Integration rule for [`AcquisitionMode::QuadratureExact`]. In one
/// dimension the panels break at the design points and candidates, where
/// the integrand has kinks; otherwise `panels` equal panels per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub panels: usize,
    pub per_panel: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { panels: 32, per_panel: 8 }
    }
}

impl QuadratureConfig {
    pub fn rule(&self, design: &PointSet, candidates: &PointSet, half_width: f64) -> Result<TensorQuadrature> {
        if design.dim() == 1 {
            let mut breaks = design.as_flat().to_vec();
            breaks.extend_from_slice(candidates.as_flat());
            TensorQuadrature::with_breakpoints(half_width, &breaks, self.per_panel)
        } else {
            TensorQuadrature::composite(design.dim(), half_width, self.panels, self.per_panel)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Kernel used as is, or as the template for estimation.
    pub kernel: KernelSpec,
    pub hyperparameters: Hyperparameters,
    /// Domain half-width `B` of `(-B, B)^d`.
    pub half_width: f64,
    pub steps: usize,
    pub gamma: f64,
    pub candidate_count: usize,
    /// Refit hyperparameters every this many iterations; in between, new
    /// points are appended with the variance re-profiled.
    pub refit_every: usize,
    /// Refits after the first start only from the current estimate.
    pub warm_start_refits: bool,
    pub acquisition_mode: AcquisitionMode,
    pub rng_seed: u64,
    pub hsgp_schedule: HsgpSchedule,
    pub quadrature: QuadratureConfig,
    /// Grid resolution per axis for the fill distance.
    pub fill_grid_per_dim: usize,
    /// When false every recorded duration is zero, which makes exported
    /// histories reproducible byte for byte.
    pub record_timing: bool,
}

impl DesignConfig {
    pub fn new(kernel: KernelSpec, half_width: f64, steps: usize, acquisition_mode: AcquisitionMode) -> Self {
        let dim = kernel.dim;
        DesignConfig {
            kernel,
            hyperparameters: Hyperparameters::Estimated(FitOptions::for_domain(half_width)),
            half_width,
            steps,
            gamma: 0.5,
            candidate_count: default_candidate_count(dim),
            refit_every: 1,
            warm_start_refits: true,
            acquisition_mode,
            rng_seed: 0,
            hsgp_schedule: HsgpSchedule::Adaptive,
            quadrature: QuadratureConfig::default(),
            fill_grid_per_dim: default_grid_per_dim(dim),
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.steps < 1 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.candidate_count < 16 {
            return Err(Error::invalid(format!("candidate_count must be at least 16, got {}", self.candidate_count)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.refit_every < 1 {
            return Err(Error::invalid("refit_every must be at least 1"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::invalid("half_width must be positive"));
        }
        if self.fill_grid_per_dim < 2 {
            return Err(Error::invalid("fill_grid_per_dim must be at least 2"));
        }
        if let HsgpSchedule::Fixed { m, half_width } = self.hsgp_schedule {
            if m < 1 || !(half_width > self.half_width) {
                return Err(Error::invalid("fixed schedule needs m >= 1 and L > B"));
            }
        }
        if let Hyperparameters::Fixed { nugget } = self.hyperparameters {
            if !(nugget >= 0.0 && nugget.is_finite()) {
                return Err(Error::invalid("fixed nugget must be nonnegative"));
            }
        }
        Ok(())
    }

    fn basis_params(&self, model: &GpModel) -> (usize, f64) {
        match self.hsgp_schedule {
            HsgpSchedule::Adaptive => default_params(model.len(), self.kernel.dim, self.half_width, model.spec().reference_lengthscale()),
            HsgpSchedule::Fixed { m, half_width } => (m, half_width),
        }
    }
}

/// Scores a set of candidates; larger is better.
pub enum Acquisition<'a> {
    Hsgp(&'a AcquisitionContext),
    /// Exact IMSE with a rule built from the design and the candidates.
    Quadrature { config: QuadratureConfig, half_width: f64 },
    /// Exact IMSE with a caller-supplied rule.
    QuadratureRule(&'a TensorQuadrature),
    Custom(&'a dyn Fn(&GpModel, &PointSet) -> Result<Vec<f64>>),
}

impl Acquisition<'_> {
    pub fn score(&self, model: &GpModel, candidates: &PointSet) -> Result<Vec<f64>> {
        match self {
            Acquisition::Hsgp(ctx) => ctx.hsgp_imse_batch(model, candidates),
            Acquisition::Quadrature { config, half_width } => {
                let quad = config.rule(model.points(), candidates, *half_width)?;
                imse_quadrature_batch(model, candidates, &quad)
            }
            Acquisition::QuadratureRule(quad) => imse_quadrature_batch(model, candidates, quad),
            Acquisition::Custom(f) => f(model, candidates),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Index into the candidate set.
    pub index: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

/// Feasible candidate with the largest acquisition; ties go to the smallest
/// candidate index.
pub fn select_next(model: &GpModel, acquisition: &Acquisition, feasibility: &FeasibilityState, candidates: &PointSet) -> Result<Selection> {
    check_dim(model.spec().dim, candidates.dim())?;
    let feasible = feasibility.feasible_indices(candidates);
    if feasible.is_empty() {
        return Err(Error::FeasibilityExhausted {
            gamma: feasibility.gamma(),
            fill_distance: feasibility.fill_distance(),
        });
    }
    let rows: Vec<&[f64]> = feasible.iter().map(|&i| candidates.point(i)).collect();
    let subset = PointSet::from_rows(candidates.dim(), &rows)?;
    let values = acquisition.score(model, &subset)?;
    check_dim(subset.len(), values.len())?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NumericalInstability(format!("acquisition is NaN at candidate {}", feasible[k])));
        }
        if *v > values[best] {
            best = k;
        }
    }
    Ok(Selection {
        index: feasible[best],
        point: subset.point(best).to_vec(),
        value: values[best],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub point: Vec<f64>,
    /// Acquisition value of the selected point (NaN for the baseline).
    pub acquisition: f64,
    pub sigma2: f64,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
    /// Fill and separation distances after adding the point.
    pub fill_distance: f64,
    pub separation_distance: f64,
    /// Stabilizing fraction used for this selection (0 for the baseline).
    pub gamma: f64,
    /// Basis size and half-width used (zero for non-reduced-rank modes).
    pub basis_m: usize,
    pub basis_half_width: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    /// Model after the last update.
    pub model: GpModel,
    /// Set when the run ended early because no candidate was feasible.
    pub stopped_early: Option<String>,
}

impl RunHistory {
    pub fn is_complete(&self) -> bool {
        self.stopped_early.is_none()
    }

    /// One row per iteration: `iter, x1..xd, acq_value, sigma2_hat,
    /// ell_hat (or ell_hat_1..), g_hat, h_N, q_N, gamma, seconds`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.model.spec().dim;
        let n_ell = self.model.spec().n_lengthscales();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string()];
        header.extend((1..=dim).map(|k| format!("x{k}")));
        header.extend(["acq_value".into(), "sigma2_hat".into()]);
        if n_ell == 1 {
            header.push("ell_hat".into());
        } else {
            header.extend((1..=n_ell).map(|k| format!("ell_hat_{k}")));
        }
        header.extend(["g_hat", "h_N", "q_N", "gamma", "seconds"].map(String::from));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.point.iter().map(f64::to_string));
            row.push(r.acquisition.to_string());
            row.push(r.sigma2.to_string());
            row.extend(r.lengthscales.iter().map(f64::to_string));
            for v in [r.nugget, r.fill_distance, r.separation_distance, r.gamma, r.seconds] {
                row.push(v.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit(cfg: &DesignConfig, data: Dataset, previous: Option<&GpModel>, iteration: usize) -> Result<GpModel> {
    match &cfg.hyperparameters {
        Hyperparameters::Fixed { nugget } => GpModel::fixed(cfg.kernel.clone(), *nugget, data),
        Hyperparameters::Estimated(opts) => {
            let mut opts = opts.clone();
            opts.seed = derive_seed(cfg.rng_seed, &[purpose::FIT, iteration as u64]);
            let template = match previous {
                Some(prev) if cfg.warm_start_refits => {
                    opts.multistarts = 1;
                    opts.nugget = if opts.fit_nugget { prev.nugget() } else { opts.nugget };
                    prev.spec().clone()
                }
                _ => cfg.kernel.clone(),
            };
            fit_mle(&data, &template, &opts)
        }
    }
}

fn elapsed(cfg: &DesignConfig, d: Duration) -> f64 {
    if cfg.record_timing {
        d.as_secs_f64()
    } else {
        0.0
    }
}

/// Runs `cfg.steps` iterations of fit, select, observe, update.
pub fn run_sequential<F>(data0: Dataset, oracle: F, cfg: &DesignConfig) -> Result<RunHistory>
where
    F: FnMut(&[f64]) -> f64,
{
    run_sequential_with(data0, oracle, cfg, |_, _| Ok(()))
}

/// [`run_sequential`] with an observer called after every update (outside
/// the timed region), e.g. to compute test-set metrics.
pub fn run_sequential_with<F, O>(data0: Dataset, mut oracle: F, cfg: &DesignConfig, mut observe: O) -> Result<RunHistory>
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(&IterationRecord, &GpModel) -> Result<()>,
{
    cfg.validate()?;
    check_dim(cfg.kernel.dim, data0.dim())?;
    if data0.is_empty() {
        return Err(Error::invalid("initial data must be nonempty"));
    }
    let dim = cfg.kernel.dim;
    let b = cfg.half_width;
    let mut feasibility = FeasibilityState::new(data0.points(), b, cfg.gamma, cfg.fill_grid_per_dim)?;
    let baseline = match cfg.acquisition_mode {
        AcquisitionMode::LhsBaseline => Some(lhs_sample(cfg.steps, dim, b, &mut stream(cfg.rng_seed, &[purpose::BASELINE]))?),
        _ => None,
    };

    let start = Instant::now();
    let mut model = fit(cfg, data0, None, 0).map_err(|e| e.at_iteration(0))?;
    let mut carry = start.elapsed();
    let mut records = Vec::with_capacity(cfg.steps);
    let mut stopped_early = None;

    for i in 0..cfg.steps {
        let start = Instant::now();
        let refit = i > 0 && i % cfg.refit_every == 0 && matches!(cfg.hyperparameters, Hyperparameters::Estimated(_));
        if refit {
            model = fit(cfg, model.data().clone(), Some(&model), i).map_err(|e| e.at_iteration(i))?;
        }

        let mut gamma_used = 0.0;
        let (mut basis_m, mut basis_l) = (0, 0.0);
        let selection = match &baseline {
            Some(batch) => Selection {
                index: i,
                point: batch.point(i).to_vec(),
                value: f64::NAN,
            },
            None => {
                let candidates = lhs_sample(cfg.candidate_count, dim, b, &mut stream(cfg.rng_seed, &[purpose::CANDIDATES, i as u64]))?;
                let ctx;
                let acquisition = match cfg.acquisition_mode {
                    AcquisitionMode::HsgpClosedForm => {
                        (basis_m, basis_l) = cfg.basis_params(&model);
                        ctx = AcquisitionContext::for_model(&model, basis_m, basis_l, b).map_err(|e| e.at_iteration(i))?;
                        Acquisition::Hsgp(&ctx)
                    }
                    _ => Acquisition::Quadrature {
                        config: cfg.quadrature,
                        half_width: b,
                    },
                };
                gamma_used = cfg.gamma;
                match select_next(&model, &acquisition, &feasibility, &candidates) {
                    Ok(s) => s,
                    Err(Error::FeasibilityExhausted { .. }) => {
                        gamma_used = 0.5 * cfg.gamma;
                        feasibility.set_gamma(gamma_used)?;
                        let retry = select_next(&model, &acquisition, &feasibility, &candidates);
                        feasibility.set_gamma(cfg.gamma)?;
                        match retry {
                            Ok(s) => s,
                            Err(Error::FeasibilityExhausted { gamma, fill_distance }) => {
                                stopped_early = Some(format!(
                                    "iteration {i}: no feasible candidate at gamma = {gamma} (fill distance {fill_distance})"
                                ));
                                break;
                            }
                            Err(e) => return Err(e.at_iteration(i)),
                        }
                    }
                    Err(e) => return Err(e.at_iteration(i)),
                }
            }
        };
        let (sigma2, lengthscales, nugget) = (model.sigma2(), model.spec().lengthscales.clone(), model.nugget());
        let before_oracle = start.elapsed() + carry;
        carry = Duration::ZERO;

        let y = oracle(&selection.point);
        if !y.is_finite() {
            return Err(Error::invalid(format!("oracle returned {y} at {:?}", selection.point)).at_iteration(i));
        }

        let start = Instant::now();
        model.append(&selection.point, y).map_err(|e| e.at_iteration(i))?;
        feasibility.add(&selection.point)?;
        let record = IterationRecord {
            iteration: i,
            point: selection.point,
            acquisition: selection.value,
            sigma2,
            lengthscales,
            nugget,
            fill_distance: feasibility.fill_distance(),
            separation_distance: feasibility.separation_distance(),
            gamma: gamma_used,
            basis_m,
            basis_half_width: basis_l,
            seconds: elapsed(cfg, before_oracle + start.elapsed()),
        };
        observe(&record, &model).map_err(|e| e.at_iteration(i))?;
        records.push(record);
    }

    Ok(RunHistory {
        records,
        model,
        stopped_early,
    })
}
