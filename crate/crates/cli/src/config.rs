//! TOML configuration files. Unknown keys are rejected.

use std::path::Path;

use hsgp_design::bench::ExperimentSuite;
use hsgp_design::design::{QuadratureConfig, HsgpSchedule};
use hsgp_design::{BenchmarkId, DesignConfig, FitOptions, HyperBounds, Hyperparameters, KernelFamily, KernelSpec, Method};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub dim: usize,
    #[serde(default = "one")]
    pub sigma2: f64,
    /// One value (isotropic) or one per dimension (product kernel).
    pub lengthscales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn to_spec(&self) -> Result<KernelSpec, CliError> {
        let spec = KernelSpec {
            family: self.family,
            sigma2: self.sigma2,
            lengthscales: self.lengthscales.clone(),
            nu: self.nu,
            dim: self.dim,
        };
        spec.validate().map_err(|e| CliError::Config(format!("kernel: {e}")))?;
        Ok(spec)
    }
}

/// Acquisition fidelity check: exact versus reduced-rank IMSE over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub seed: u64,
    pub kernel: KernelConfig,
    /// Domain half-width `B`.
    #[serde(default = "one")]
    pub domain: f64,
    /// Number of Latin hypercube design points.
    pub n: usize,
    /// Relative nugget `g = eta / sigma2`.
    pub nugget: f64,
    pub m: usize,
    /// Expansion half-width `L`.
    pub half_width: f64,
    /// Candidate grid points per axis (endpoints included).
    pub grid: usize,
    pub threshold: f64,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub panels: usize,
    pub per_panel: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection { panels: 48, per_panel: 8 }
    }
}

impl From<QuadratureSection> for QuadratureConfig {
    fn from(q: QuadratureSection) -> Self {
        QuadratureConfig {
            panels: q.panels,
            per_panel: q.per_panel,
        }
    }
}

/// Envelope check of measured kernel errors against the theoretical bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub kernel: KernelConfig,
    #[serde(default = "one")]
    pub domain: f64,
    pub m: Vec<usize>,
    pub half_widths: Vec<f64>,
    /// Evaluation grid points per axis for the sup norm.
    pub grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum HyperparameterSection {
    Fixed {
        nugget: f64,
    },
    Estimated {
        #[serde(default)]
        fit_nugget: bool,
        nugget: f64,
        lengthscale_bounds: [f64; 2],
        #[serde(default = "default_nugget_bounds")]
        nugget_bounds: [f64; 2],
        #[serde(default = "default_multistarts")]
        multistarts: usize,
    },
}

fn default_nugget_bounds() -> [f64; 2] {
    [1e-12, 1.0]
}

fn default_multistarts() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ScheduleSection {
    Adaptive,
    Fixed { m: usize, half_width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub steps: usize,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_count: Option<usize>,
    pub refit_every: usize,
    #[serde(default = "yes")]
    pub warm_start_refits: bool,
    pub schedule: ScheduleSection,
    pub hyperparameters: HyperparameterSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill_grid_per_dim: Option<usize>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSection>,
    #[serde(default = "yes")]
    pub record_timing: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub replicates: usize,
    pub benchmark: BenchmarkId,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "one")]
    pub domain: f64,
    pub initial_size: usize,
    pub methods: Vec<Method>,
    #[serde(default = "one_usize")]
    pub metrics_every: usize,
    pub kernel: KernelConfig,
    pub design: DesignSection,
}

fn one_usize() -> usize {
    1
}

impl RunConfig {
    pub fn to_suite(&self) -> Result<ExperimentSuite, CliError> {
        let kernel = self.kernel.to_spec()?;
        let d = &self.design;
        let mut design = DesignConfig::new(kernel, self.domain, d.steps, hsgp_design::AcquisitionMode::HsgpClosedForm);
        design.gamma = d.gamma;
        if let Some(c) = d.candidate_count {
            design.candidate_count = c;
        }
        design.refit_every = d.refit_every;
        design.warm_start_refits = d.warm_start_refits;
        design.hsgp_schedule = match d.schedule {
            ScheduleSection::Adaptive => HsgpSchedule::Adaptive,
            ScheduleSection::Fixed { m, half_width } => HsgpSchedule::Fixed { m, half_width },
        };
        design.hyperparameters = match &d.hyperparameters {
            HyperparameterSection::Fixed { nugget } => Hyperparameters::Fixed { nugget: *nugget },
            HyperparameterSection::Estimated {
                fit_nugget,
                nugget,
                lengthscale_bounds,
                nugget_bounds,
                multistarts,
            } => {
                let mut fit = FitOptions::for_domain(self.domain);
                fit.fit_nugget = *fit_nugget;
                fit.nugget = *nugget;
                fit.bounds = HyperBounds {
                    lengthscale: (lengthscale_bounds[0], lengthscale_bounds[1]),
                    nugget: (nugget_bounds[0], nugget_bounds[1]),
                };
                fit.multistarts = *multistarts;
                Hyperparameters::Estimated(fit)
            }
        };
        if let Some(g) = d.fill_grid_per_dim {
            design.fill_grid_per_dim = g;
        }
        if let Some(q) = d.quadrature {
            design.quadrature = q.into();
        }
        design.record_timing = d.record_timing;
        let suite = ExperimentSuite {
            benchmark: self.benchmark,
            noise_sd: self.noise_sd,
            initial_size: self.initial_size,
            methods: self.methods.clone(),
            design,
            seed: self.seed,
            metrics_every: self.metrics_every,
        };
        suite.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.replicates < 1 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        Ok(suite)
    }
}

/// Reads a config file, or the `config` table of a run manifest.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut value: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if value.contains_key("tool_version") {
        value = match value.remove("config") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(CliError::Config(format!("{}: manifest has no config table", path.display()))),
        };
    }
    T::deserialize(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
