use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design points {first} and {second} coincide (sup-norm distance below 1e-12)")]
    DuplicateDesign { first: usize, second: usize },

    #[error("point {point:?} lies outside the expansion domain (-{half_width}, {half_width})")]
    OutsideDomain { point: Vec<f64>, half_width: f64 },

    #[error("kernel matrix is not positive definite at any jitter level")]
    IllConditioned,

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("degenerate candidate: P^2 + eta = {0} is not positive")]
    DegenerateCandidate(f64),

    #[error("no feasible candidate at gamma = {gamma} (fill distance {fill_distance})")]
    FeasibilityExhausted { gamma: f64, fill_distance: f64 },

    #[error("run stopped early: {0}")]
    StoppedEarly(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
