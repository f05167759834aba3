//! Sequential experimental design for Gaussian-process surrogates with a
//! closed-form reduced-rank approximation of the integrated mean squared
//! error acquisition.

pub mod acquisition;
pub mod bench;
pub mod bounds;
pub mod design;
pub mod error;
pub mod gp;
pub mod hsgp;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod points;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use acquisition::{fill_distance, imse_quadrature, is_feasible, separation_distance, AcquisitionContext, FeasibilityState};
pub use bench::{make_benchmark, evaluate_metrics, run_experiment, BenchmarkFn, BenchmarkId, ExperimentRecord, ExperimentSuite, Method};
pub use design::{lhs_sample, run_sequential, run_sequential_with, select_next, Acquisition, AcquisitionMode, DesignConfig, HsgpSchedule, Hyperparameters, IterationRecord, RunHistory};
pub use error::{Error, Result};
pub use gp::{fit_mle, Dataset, FitOptions, GpModel, HyperBounds, MeanFn};
pub use hsgp::{apply_gd, default_params, gram_g1, HsgpBasis};
pub use kernels::{kernel_eval, kernel_matrix, spectral_density, KernelFamily, KernelSpec};
pub use points::PointSet;
pub use quadrature::TensorQuadrature;
