//! Correlation of gas with the resources an execution consumes.
//!
//! Every routine is generic over the float type; the crate root exposes
//! `f64` and `f32` aliases of the data types.

mod io;
mod pca;
mod resources;
mod stats;

pub use io::{read_measurements, write_measurements, write_report, write_scatter};
pub use pca::{
    covariance, first_principal_component, principal_axis, sign_tolerance, tolerance, PrincipalAxis, MAX_ITERATIONS,
};
pub use resources::{
    correlation_report, multivariate_correlation, split_memory_intensive, CorrelationReport, CorrelationRow, GasMemory,
    MeasurementRow, PhaseRegression, ResourceMatrix, CPU, MEMORY, RESOURCE_SETS, STORAGE,
};
pub use stats::{gas_per_byte_regression, mean, ols, pearson, population_std, standardize, Regression};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("input has zero variance")]
    ConstantInput,
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("power iteration did not converge")]
    NoConvergence,
    #[error("empty resource selection")]
    EmptySelection,
    #[error("unknown resource column `{0}`")]
    UnknownColumn(String),
    #[error("need at least 10 executions, got {0}")]
    TooFewSamples(usize),
    #[error("execution {0} has zero gas or negative memory growth")]
    InvalidSample(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
