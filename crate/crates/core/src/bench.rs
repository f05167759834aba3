//! Benchmark functions, test-set metrics and the replicate experiment runner.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{lhs_sample, run_sequential_with, AcquisitionMode, DesignConfig};
use crate::error::{check_dim, Error, Result};
use crate::gp::{Dataset, GpModel, MeanFn};
use crate::kernels::{correlation_matrix, KernelSpec};
use crate::linalg::cholesky_with_jitter;
use crate::points::PointSet;
use crate::rng::{derive_seed, purpose, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    F1,
    F2,
    F3,
    F4,
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BenchmarkId::F1 => "f1",
            BenchmarkId::F2 => "f2",
            BenchmarkId::F3 => "f3",
            BenchmarkId::F4 => "f4",
        };
        f.write_str(s)
    }
}

/// Variance of the isotropic Gaussian bumps in `f2`.
const F2_VARIANCE: f64 = 0.01;
const F2_MEANS: [[f64; 2]; 4] = [[0.5, 0.5], [-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5]];
const F3_BUMPS: usize = 100;

#[derive(Clone, Debug)]
struct Bump {
    amplitude: f64,
    centre: Vec<f64>,
    scale: f64,
}

#[derive(Clone, Debug)]
enum Shape {
    /// Interpolant of a Matérn-5/2 sample path.
    SamplePath(Box<GpModel>),
    GaussianMixture,
    Bumps(Vec<Bump>),
    Cosines,
}

/// A test function on `(-1, 1)^d` with every random ingredient drawn at
/// construction.
#[derive(Clone, Debug)]
pub struct BenchmarkFn {
    id: BenchmarkId,
    dim: usize,
    shape: Shape,
    pub noise_sd: f64,
}

/// Builds benchmark `id` in dimension `dim`; random parameters come from `seed`.
///
/// * `f1`: interpolant of a Matérn-5/2 (`sigma2 = 1`, `ell = 0.1`) sample at
///   `200 d` Latin hypercube sites.
/// * `f2` (2-D only): `p(x|mu1) + p(x|mu2) - p(x|mu3) - p(x|mu4)` for normal
///   densities with variance 0.01 and means `(±0.5, ±0.5)`.
/// * `f3`: `sum_k A_k exp(-|x - c_k| / s_k)` over 100 random bumps.
/// * `f4`: `sum_k cos(10 pi x_k / (1 + x_k + 5 x_k^2))`.
pub fn make_benchmark(id: BenchmarkId, dim: usize, seed: u64) -> Result<BenchmarkFn> {
    if dim == 0 {
        return Err(Error::invalid("benchmark dimension must be positive"));
    }
    let mut rng = stream(seed, &[purpose::BENCHMARK]);
    let shape = match id {
        BenchmarkId::F1 => {
            let spec = KernelSpec::matern(dim, 1.0, 0.1, 2.5);
            let sites = lhs_sample(200 * dim, dim, 1.0, &mut rng)?;
            let (chol, _) = cholesky_with_jitter(&correlation_matrix(&spec, &sites), 0.0)?;
            let z = DVector::from_iterator(sites.len(), (0..sites.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let y = (&chol * z).as_slice().to_vec();
            let data = Dataset::new(sites, y, MeanFn::Zero)?;
            Shape::SamplePath(Box::new(GpModel::fixed(spec, 0.0, data)?))
        }
        BenchmarkId::F2 => {
            if dim != 2 {
                return Err(Error::invalid(format!("f2 is defined in two dimensions, not {dim}")));
            }
            Shape::GaussianMixture
        }
        BenchmarkId::F3 => Shape::Bumps(
            (0..F3_BUMPS)
                .map(|_| Bump {
                    amplitude: rng.random_range(-1.0..1.0),
                    centre: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    scale: rng.random_range(0.01..1.0),
                })
                .collect(),
        ),
        BenchmarkId::F4 => Shape::Cosines,
    };
    Ok(BenchmarkFn {
        id,
        dim,
        shape,
        noise_sd: 0.0,
    })
}

fn normal_density_2d(x: &[f64], mean: &[f64; 2], variance: f64) -> f64 {
    let r2 = (x[0] - mean[0]).powi(2) + (x[1] - mean[1]).powi(2);
    (-0.5 * r2 / variance).exp() / (2.0 * std::f64::consts::PI * variance)
}

impl BenchmarkFn {
    pub fn with_noise(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn id(&self) -> BenchmarkId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Noise-free value at `x`.
    ///
    /// # Panics
    /// If `x.len() != self.dim()`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "benchmark evaluated at a point of the wrong dimension");
        match &self.shape {
            Shape::SamplePath(model) => model.posterior_mean(x).expect("dimension checked"),
            Shape::GaussianMixture => {
                let p: Vec<f64> = F2_MEANS.iter().map(|m| normal_density_2d(x, m, F2_VARIANCE)).collect();
                p[0] + p[1] - p[2] - p[3]
            }
            Shape::Bumps(bumps) => bumps
                .iter()
                .map(|b| {
                    let r = crate::points::dist(x, &b.centre);
                    b.amplitude * (-r / b.scale).exp()
                })
                .sum(),
            Shape::Cosines => x
                .iter()
                .map(|&v| (10.0 * std::f64::consts::PI * v / (1.0 + v + 5.0 * v * v)).cos())
                .sum(),
        }
    }

    pub fn eval_batch(&self, points: &PointSet) -> Result<Vec<f64>> {
        check_dim(self.dim, points.dim())?;
        match &self.shape {
            Shape::SamplePath(model) => model.posterior_mean_batch(points),
            _ => Ok(points.iter().map(|x| self.eval(x)).collect()),
        }
    }

    /// Noisy observation `f(x) + noise_sd * z`.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let f = self.eval(x);
        if self.noise_sd > 0.0 {
            f + self.noise_sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            f
        }
    }

    /// Generating sites and responses of `f1`.
    pub fn generating_data(&self) -> Option<&Dataset> {
        match &self.shape {
            Shape::SamplePath(model) => Some(model.data()),
            _ => None,
        }
    }
}

/// Cell-centred uniform grid on `(-b, b)^d`: 512 points in one dimension,
/// 101 per axis in two, 20 per axis beyond.
pub fn test_grid(dim: usize, half_width: f64) -> PointSet {
    let per_dim = match dim {
        1 => 512,
        2 => 101,
        _ => 20,
    };
    let inner = half_width * (1.0 - 1.0 / per_dim as f64);
    PointSet::grid(dim, inner, per_dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mean_post_var: f64,
}

/// Test-set RMSE of the posterior mean against `truth` and the mean
/// posterior variance over `grid`.
pub fn evaluate_metrics(model: &GpModel, truth: &[f64], grid: &PointSet) -> Result<Metrics> {
    check_dim(grid.len(), truth.len())?;
    if grid.is_empty() {
        return Err(Error::invalid("test grid is empty"));
    }
    let mean = model.posterior_mean_batch(grid)?;
    let var = model.posterior_mse_batch(grid)?;
    let n = grid.len() as f64;
    let sse: f64 = mean.iter().zip(truth).map(|(m, f)| (m - f).powi(2)).sum();
    Ok(Metrics {
        rmse: (sse / n).sqrt(),
        mean_post_var: var.iter().sum::<f64>() / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HsgpImse,
    QuadratureImse,
    Lhs,
}

impl Method {
    pub fn acquisition_mode(self) -> AcquisitionMode {
        match self {
            Method::HsgpImse => AcquisitionMode::HsgpClosedForm,
            Method::QuadratureImse => AcquisitionMode::QuadratureExact,
            Method::Lhs => AcquisitionMode::LhsBaseline,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::HsgpImse => "hsgp_imse",
            Method::QuadratureImse => "quadrature_imse",
            Method::Lhs => "lhs",
        };
        f.write_str(s)
    }
}

/// Metrics after `iteration` sequential points (iteration 0 is the
/// initial design).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub iteration: usize,
    pub n: usize,
    pub rmse: f64,
    pub mean_post_var: f64,
    pub cum_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    pub benchmark: BenchmarkId,
    pub noise_sd: f64,
    pub initial_size: usize,
    pub methods: Vec<Method>,
    /// Shared design settings; the acquisition mode and seed are set per
    /// method and replicate.
    pub design: DesignConfig,
    pub seed: u64,
    /// Metrics are computed every this many iterations and at the end.
    pub metrics_every: usize,
}

impl ExperimentSuite {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.initial_size < 1 {
            return Err(Error::invalid("initial_size must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.metrics_every < 1 {
            return Err(Error::invalid("metrics_every must be at least 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be nonnegative"));
        }
        Ok(())
    }

    /// Seed of replicate `r`.
    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive_seed(self.seed, &[replicate as u64])
    }

    /// The benchmark is shared by every replicate.
    pub fn benchmark_fn(&self) -> Result<BenchmarkFn> {
        Ok(make_benchmark(self.benchmark, self.design.kernel.dim, self.seed)?.with_noise(self.noise_sd))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ReplicateOutcome {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<ReplicateFailure>,
}

fn run_method(
    suite: &ExperimentSuite,
    bench: &BenchmarkFn,
    grid: &PointSet,
    truth: &[f64],
    data0: &Dataset,
    replicate: usize,
    method: Method,
) -> Result<Vec<ExperimentRecord>> {
    let seed = suite.replicate_seed(replicate);
    let mut cfg = suite.design.clone();
    cfg.acquisition_mode = method.acquisition_mode();
    cfg.rng_seed = seed;
    let steps = cfg.steps;
    let mut noise = stream(seed, &[purpose::NOISE, method as u64]);
    let oracle = |x: &[f64]| bench.observe(x, &mut noise);

    let mut records = Vec::new();
    let mut cum_seconds = 0.0;
    let observe = |rec: &crate::design::IterationRecord, model: &GpModel| {
        cum_seconds += rec.seconds;
        let iteration = rec.iteration + 1;
        if iteration % suite.metrics_every == 0 || iteration == steps {
            let m = evaluate_metrics(model, truth, grid)?;
            records.push(ExperimentRecord {
                method,
                replicate,
                seed,
                iteration,
                n: model.len(),
                rmse: m.rmse,
                mean_post_var: m.mean_post_var,
                cum_seconds,
            });
        }
        Ok(())
    };
    let history = run_sequential_with(data0.clone(), oracle, &cfg, observe)?;
    if let Some(reason) = history.stopped_early {
        return Err(Error::StoppedEarly(reason));
    }
    Ok(records)
}

/// Runs every method of `suite` for one replicate on a shared initial
/// design. A failing method is reported and the others still run.
pub fn run_replicate(suite: &ExperimentSuite, replicate: usize) -> Result<ReplicateOutcome> {
    suite.validate()?;
    let bench = suite.benchmark_fn()?;
    let dim = bench.dim();
    let b = suite.design.half_width;
    let grid = test_grid(dim, b);
    let truth = bench.eval_batch(&grid)?;
    let seed = suite.replicate_seed(replicate);
    let x0 = lhs_sample(suite.initial_size, dim, b, &mut stream(seed, &[purpose::INITIAL_DESIGN]))?;
    let mut noise = stream(seed, &[purpose::INITIAL_DESIGN, purpose::NOISE]);
    let y0 = x0.iter().map(|x| bench.observe(x, &mut noise)).collect();
    let data0 = Dataset::new(x0, y0, MeanFn::Zero)?;

    let mut outcome = ReplicateOutcome::default();
    for &method in &suite.methods {
        match run_method(suite, &bench, &grid, &truth, &data0, replicate, method) {
            Ok(records) => outcome.records.extend(records),
            Err(e) => outcome.failures.push(ReplicateFailure {
                replicate,
                method,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Runs `replicates` replicates one after another.
pub fn run_experiment(suite: &ExperimentSuite, replicates: usize) -> Result<ExperimentResults> {
    if replicates < 1 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let outcomes = (0..replicates).map(|r| run_replicate(suite, r)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResults::from_outcomes(outcomes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub iteration: usize,
    pub n: usize,
    pub replicates: usize,
    pub rmse_min: f64,
    pub rmse_max: f64,
    pub rmse_mean: f64,
    pub rmse_median: f64,
    pub mean_post_var_min: f64,
    pub mean_post_var_max: f64,
    pub mean_post_var_mean: f64,
    pub mean_post_var_median: f64,
    pub cum_seconds_min: f64,
    pub cum_seconds_max: f64,
    pub cum_seconds_mean: f64,
    pub cum_seconds_median: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentResults {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<ReplicateFailure>,
}

fn envelope(values: &mut [f64]) -> (f64, f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    (values[0], values[n - 1], mean, median)
}

impl ExperimentResults {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = ReplicateOutcome>) -> Self {
        let mut results = ExperimentResults::default();
        for o in outcomes {
            results.records.extend(o.records);
            results.failures.extend(o.failures);
        }
        results
            .records
            .sort_by(|a, b| (a.method, a.replicate, a.iteration).cmp(&(b.method, b.replicate, b.iteration)));
        results
    }

    /// Pointwise min, max, mean and median across replicates, per method
    /// and iteration.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Method, usize, usize)> = self.records.iter().map(|r| (r.method, r.iteration, r.n)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(method, iteration, n)| {
                let group: Vec<&ExperimentRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.method == method && r.iteration == iteration)
                    .collect();
                let (rmse_min, rmse_max, rmse_mean, rmse_median) = envelope(&mut group.iter().map(|r| r.rmse).collect::<Vec<_>>());
                let (v_min, v_max, v_mean, v_median) = envelope(&mut group.iter().map(|r| r.mean_post_var).collect::<Vec<_>>());
                let (t_min, t_max, t_mean, t_median) = envelope(&mut group.iter().map(|r| r.cum_seconds).collect::<Vec<_>>());
                SummaryRow {
                    method,
                    iteration,
                    n,
                    replicates: group.len(),
                    rmse_min,
                    rmse_max,
                    rmse_mean,
                    rmse_median,
                    mean_post_var_min: v_min,
                    mean_post_var_max: v_max,
                    mean_post_var_mean: v_mean,
                    mean_post_var_median: v_median,
                    cum_seconds_min: t_min,
                    cum_seconds_max: t_max,
                    cum_seconds_mean: t_mean,
                    cum_seconds_median: t_median,
                }
            })
            .collect()
    }

    /// Final-iteration records of `method`, one per successful replicate.
    pub fn final_records(&self, method: Method) -> Vec<&ExperimentRecord> {
        let last = self.records.iter().filter(|r| r.method == method).map(|r| r.iteration).max();
        self.records
            .iter()
            .filter(|r| r.method == method && Some(r.iteration) == last)
            .collect()
    }

    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.summary() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Hyperparameters;
    use approx::assert_relative_eq;

    #[test]
    fn f4_at_origin_is_one() {
        let f = make_benchmark(BenchmarkId::F4, 1, 0).unwrap();
        assert_eq!(f.eval(&[0.0]), 1.0);
    }

    #[test]
    fn f2_vanishes_at_origin_and_has_signed_peaks() {
        let f = make_benchmark(BenchmarkId::F2, 2, 0).unwrap();
        assert!(f.eval(&[0.0, 0.0]).abs() < 1e-15);
        assert!(f.eval(&[0.5, 0.5]) > 0.0 && f.eval(&[-0.5, -0.5]) > 0.0);
        assert!(f.eval(&[0.5, -0.5]) < 0.0 && f.eval(&[-0.5, 0.5]) < 0.0);
    }

    #[test]
    fn f2_requires_two_dimensions() {
        assert!(make_benchmark(BenchmarkId::F2, 1, 0).is_err());
        assert!(make_benchmark(BenchmarkId::F2, 3, 0).is_err());
    }

    #[test]
    fn f3_is_frozen() {
        let a = make_benchmark(BenchmarkId::F3, 2, 9).unwrap();
        let b = make_benchmark(BenchmarkId::F3, 2, 9).unwrap();
        let x = [0.1, -0.3];
        assert_eq!(a.eval(&x), b.eval(&x));
        assert_eq!(a.eval(&x), a.eval(&x));
    }

    #[test]
    fn f1_interpolates_generating_data() {
        let f = make_benchmark(BenchmarkId::F1, 1, 4).unwrap();
        let data = f.generating_data().unwrap();
        assert_eq!(data.len(), 200);
        for (x, y) in data.points().iter().zip(data.y()) {
            assert!((f.eval(x) - y).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_model_rmse_is_grid_rms() {
        let f = make_benchmark(BenchmarkId::F4, 1, 0).unwrap();
        let grid = test_grid(1, 1.0);
        let truth = f.eval_batch(&grid).unwrap();
        // a single zero observation gives an identically zero mean
        let data = Dataset::new(PointSet::from_rows(1, &[[0.0]]).unwrap(), vec![0.0], MeanFn::Zero).unwrap();
        let model = GpModel::fixed(KernelSpec::gaussian(1, 1.0, 0.1), 0.0, data).unwrap();
        let m = evaluate_metrics(&model, &truth, &grid).unwrap();
        let rms = (truth.iter().map(|v| v * v).sum::<f64>() / truth.len() as f64).sqrt();
        assert_relative_eq!(m.rmse, rms, max_relative = 1e-12);
    }

    #[test]
    fn test_grid_is_interior() {
        for d in 1..=2 {
            let g = test_grid(d, 1.0);
            assert!(g.iter().all(|x| x.iter().all(|v| v.abs() < 1.0)));
        }
        assert_eq!(test_grid(1, 1.0).len(), 512);
        assert_eq!(test_grid(2, 1.0).len(), 101 * 101);
    }

    fn tiny_suite() -> ExperimentSuite {
        let mut design = DesignConfig::new(KernelSpec::matern(1, 1.0, 0.2, 1.5), 1.0, 4, AcquisitionMode::HsgpClosedForm);
        design.hyperparameters = Hyperparameters::Fixed { nugget: 1e-6 };
        design.record_timing = false;
        ExperimentSuite {
            benchmark: BenchmarkId::F4,
            noise_sd: 0.0,
            initial_size: 6,
            methods: vec![Method::HsgpImse, Method::Lhs],
            design,
            seed: 5,
            metrics_every: 1,
        }
    }

    #[test]
    fn single_replicate_envelope_is_the_trajectory() {
        let res = run_experiment(&tiny_suite(), 1).unwrap();
        assert!(res.failures.is_empty());
        for row in res.summary() {
            let r = res
                .records
                .iter()
                .find(|r| r.method == row.method && r.iteration == row.iteration)
                .unwrap();
            assert_eq!((row.rmse_min, row.rmse_max, row.rmse_mean), (r.rmse, r.rmse, r.rmse));
        }
        assert_eq!(res.final_records(Method::Lhs).len(), 1);
    }

    #[test]
    fn records_round_trip_through_csv() {
        let res = run_experiment(&tiny_suite(), 2).unwrap();
        let mut buf = Vec::new();
        res.write_records_csv(&mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let back: Vec<ExperimentRecord> = rdr.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, res.records);
    }
}
