//! Command implementations for the `hsgp-design` binary.

pub mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hsgp_design::acquisition::imse_quadrature_batch;
use hsgp_design::bench::{run_replicate, ExperimentResults, ReplicateOutcome};
use hsgp_design::bounds::{measure_errors, theoretical_bounds};
use hsgp_design::design::QuadratureConfig;
use hsgp_design::rng::{purpose, stream};
use hsgp_design::{lhs_sample, AcquisitionContext, Dataset, GpModel, KernelSpec, MeanFn, PointSet};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use config::{BoundsConfig, FidelityConfig, RunConfig};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line or configuration; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hsgp_design::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cannot serialize manifest: {0}")]
    Manifest(#[from] toml::ser::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Success(String),
    /// A quantitative check failed (exit code 1).
    Failed(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Success(_) => 0,
            Outcome::Failed(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Outcome::Success(m) | Outcome::Failed(m) => m,
        }
    }
}

/// Options shared by all commands.
#[derive(Clone, Debug)]
pub struct Common {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    seed: Option<u64>,
    out_dir: String,
    config: &'a C,
}

fn write_manifest<C: Serialize>(command: &str, common: &Common, seed: Option<u64>, config: &C) -> Result<(), CliError> {
    fs::create_dir_all(&common.out)?;
    let manifest = RunManifest {
        command,
        tool_version: TOOL_VERSION,
        seed,
        out_dir: common.out.display().to_string(),
        config,
    };
    fs::write(common.out.join("manifest.toml"), toml::to_string(&manifest)?)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Exact and reduced-rank acquisition profiles over a candidate grid.
#[derive(Clone, Debug)]
pub struct FidelityProfile {
    pub grid: PointSet,
    pub exact: Vec<f64>,
    pub approx: Vec<f64>,
}

impl FidelityProfile {
    /// Largest absolute discrepancy relative to the largest exact value.
    pub fn relative_discrepancy(&self) -> f64 {
        let scale = self.exact.iter().cloned().fold(0.0, f64::max);
        let worst = self.exact.iter().zip(&self.approx).map(|(e, a)| (e - a).abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}

fn check_fidelity(cfg: &FidelityConfig) -> Result<KernelSpec, CliError> {
    let spec = cfg.kernel.to_spec()?;
    if !(1..=2).contains(&spec.dim) {
        return Err(CliError::Config(format!("fidelity supports d = 1 or 2, got {}", spec.dim)));
    }
    if cfg.n < 1 || cfg.grid < 1 || !(cfg.threshold > 0.0) {
        return Err(CliError::Config("n, grid and threshold must be positive".into()));
    }
    if !(cfg.half_width > cfg.domain) {
        return Err(CliError::Config(format!("half_width L = {} must exceed the domain B = {}", cfg.half_width, cfg.domain)));
    }
    Ok(spec)
}

/// Checks `cfg` and evaluates both acquisitions on a Latin hypercube design
/// with zero responses.
pub fn fidelity_profile(cfg: &FidelityConfig) -> Result<FidelityProfile, CliError> {
    let spec = check_fidelity(cfg)?;
    let d = spec.dim;
    let b = cfg.domain;
    let x = lhs_sample(cfg.n, d, b, &mut stream(cfg.seed, &[purpose::INITIAL_DESIGN]))?;
    let data = Dataset::new(x, vec![0.0; cfg.n], MeanFn::Zero)?;
    let model = GpModel::fixed(spec, cfg.nugget, data)?;
    let grid = PointSet::grid(d, b, cfg.grid);
    let ctx = AcquisitionContext::for_model(&model, cfg.m, cfg.half_width, b)?;
    let approx = ctx.hsgp_imse_batch(&model, &grid)?;
    let quad = QuadratureConfig::from(cfg.quadrature).rule(model.points(), &grid, b)?;
    let exact = imse_quadrature_batch(&model, &grid, &quad)?;
    Ok(FidelityProfile { grid, exact, approx })
}

/// Exact versus reduced-rank acquisition over a candidate grid; writes
/// `profiles.csv` and fails when the largest discrepancy relative to the
/// largest exact value reaches the threshold.
pub fn cmd_fidelity(common: &Common, threshold: Option<f64>) -> Result<Outcome, CliError> {
    let mut cfg: FidelityConfig = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    check_fidelity(&cfg)?;
    write_manifest("fidelity", common, Some(cfg.seed), &cfg)?;
    let profile = fidelity_profile(&cfg)?;

    let d = profile.grid.dim();
    let mut w = csv::Writer::from_writer(create(&common.out, "profiles.csv")?);
    let mut header: Vec<String> = if d == 1 { vec!["t".into()] } else { (1..=d).map(|k| format!("t{k}")).collect() };
    header.extend(["imse_exact".into(), "imse_hsgp".into()]);
    w.write_record(&header)?;
    for (i, t) in profile.grid.iter().enumerate() {
        let mut rec: Vec<String> = t.iter().map(f64::to_string).collect();
        rec.push(profile.exact[i].to_string());
        rec.push(profile.approx[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let rel = profile.relative_discrepancy();
    let msg = format!("max relative discrepancy {rel:.3e} (threshold {:.3e})", cfg.threshold);
    Ok(if rel < cfg.threshold { Outcome::Success(msg) } else { Outcome::Failed(msg) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub m: usize,
    pub half_width: f64,
    pub aliasing_measured: f64,
    pub aliasing_bound: f64,
    pub truncation_measured: f64,
    pub truncation_bound: f64,
    pub total_measured: f64,
    pub within: bool,
}

fn admissible_bounds(cfg: &BoundsConfig) -> Result<Vec<(usize, f64, (f64, f64))>, CliError> {
    let spec = cfg.kernel.to_spec()?;
    if cfg.m.is_empty() || cfg.half_widths.is_empty() || cfg.grid < 2 {
        return Err(CliError::Config("m and half_widths must be nonempty and grid at least 2".into()));
    }
    let mut bounds = Vec::new();
    for &l in &cfg.half_widths {
        for &m in &cfg.m {
            let b = theoretical_bounds(&spec, cfg.domain, m, l).map_err(|e| CliError::Config(format!("m = {m}, L = {l}: {e}")))?;
            bounds.push((m, l, b));
        }
    }
    Ok(bounds)
}

/// Measured errors and bounds for every `(m, L)` of `cfg`, ordered by `L`
/// and then `m`. Every pair is checked for admissibility first.
pub fn bounds_rows(cfg: &BoundsConfig) -> Result<Vec<BoundsRow>, CliError> {
    let spec = cfg.kernel.to_spec()?;
    admissible_bounds(cfg)?
        .into_iter()
        .map(|(m, l, (alias_bound, trunc_bound))| {
            let e = measure_errors(&spec, cfg.domain, m, l, cfg.grid)?;
            Ok(BoundsRow {
                m,
                half_width: l,
                aliasing_measured: e.aliasing,
                aliasing_bound: alias_bound,
                truncation_measured: e.truncation,
                truncation_bound: trunc_bound,
                total_measured: e.total,
                within: e.aliasing <= alias_bound && e.truncation <= trunc_bound,
            })
        })
        .collect()
}

/// Measured sup-grid kernel errors against the theoretical bounds for every
/// `(m, L)`; writes `bounds.csv`.
pub fn cmd_validate_bounds(common: &Common) -> Result<Outcome, CliError> {
    let cfg: BoundsConfig = config::load(&common.config)?;
    admissible_bounds(&cfg)?;
    write_manifest("validate-bounds", common, common.seed, &cfg)?;
    let rows = bounds_rows(&cfg)?;

    let mut w = csv::Writer::from_writer(create(&common.out, "bounds.csv")?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let violations = rows.iter().filter(|r| !r.within).count();
    Ok(if violations == 0 {
        Outcome::Success("all measured errors within their bounds".into())
    } else {
        Outcome::Failed(format!("{violations} (m, L) pairs exceed a bound"))
    })
}

/// Replicate experiment suite; writes `runs.csv` and `summary.csv`.
pub fn cmd_run(common: &Common, jobs: usize) -> Result<Outcome, CliError> {
    let mut cfg: RunConfig = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let suite = cfg.to_suite()?;
    if jobs < 1 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    write_manifest("run", common, Some(cfg.seed), &cfg)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let outcomes: Vec<hsgp_design::Result<ReplicateOutcome>> =
        pool.install(|| (0..cfg.replicates).into_par_iter().map(|r| run_replicate(&suite, r)).collect());
    let outcomes = outcomes.into_iter().collect::<hsgp_design::Result<Vec<_>>>()?;
    let results = ExperimentResults::from_outcomes(outcomes);
    results.write_records_csv(create(&common.out, "runs.csv")?)?;
    results.write_summary_csv(create(&common.out, "summary.csv")?)?;

    if results.failures.is_empty() {
        Ok(Outcome::Success(format!("{} replicates completed", cfg.replicates)))
    } else {
        let lines: Vec<String> = results
            .failures
            .iter()
            .map(|f| format!("replicate {} ({}): {}", f.replicate, f.method, f.message))
            .collect();
        Ok(Outcome::Failed(lines.join("\n")))
    }
}
