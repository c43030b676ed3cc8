//! Gas against resource usage.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::pca::first_principal_component;
use super::stats::{gas_per_byte_regression, pearson, standardize, Regression};
use super::AnalysisError;
use crate::vm::{Era, ExecutionMeasurement, Gas};

pub const MEMORY: &str = "memory";
pub const CPU: &str = "cpu";
pub const STORAGE: &str = "storage";

/// Named resource columns and the gas vector, all of one length.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceMatrix<T> {
    columns: Vec<(String, Vec<T>)>,
    gas: Vec<T>,
}

impl<T: Float> ResourceMatrix<T> {
    pub fn new(columns: Vec<(String, Vec<T>)>, gas: Vec<T>) -> Result<Self, AnalysisError> {
        if gas.len() < 2 {
            return Err(AnalysisError::TooShort(gas.len()));
        }
        if let Some((_, c)) = columns.iter().find(|(_, c)| c.len() != gas.len()) {
            return Err(AnalysisError::LengthMismatch(gas.len(), c.len()));
        }
        Ok(ResourceMatrix { columns, gas })
    }

    /// Memory, CPU time and storage columns of `rows`.
    pub fn from_rows(rows: &[MeasurementRow]) -> Result<Self, AnalysisError> {
        let col = |f: fn(&MeasurementRow) -> f64| rows.iter().map(|r| T::from(f(r)).expect("finite")).collect();
        Self::new(
            vec![
                (MEMORY.to_string(), col(|r| r.mem_delta() as f64)),
                (CPU.to_string(), col(|r| r.time_ns as f64)),
                (STORAGE.to_string(), col(|r| r.storage_alloc as f64)),
            ],
            col(|r| r.gas as f64),
        )
    }

    pub fn column(&self, name: &str) -> Option<&[T]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    pub fn gas(&self) -> &[T] {
        &self.gas
    }

    pub fn len(&self) -> usize {
        self.gas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gas.is_empty()
    }
}

/// `|pearson(PC1(standardized selection), gas)|`.
pub fn multivariate_correlation<T: Float>(
    resources: &ResourceMatrix<T>,
    selection: &[&str],
) -> Result<T, AnalysisError> {
    if selection.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    let columns = selection
        .iter()
        .map(|name| {
            let c = resources.column(name).ok_or_else(|| AnalysisError::UnknownColumn(name.to_string()))?;
            standardize(c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let projection = first_principal_component(&columns)?;
    Ok(pearson(&projection, resources.gas())?.abs())
}

/// Gas and memory growth of one execution.
pub trait GasMemory {
    fn gas(&self) -> Gas;
    /// Bytes allocated minus bytes freed.
    fn mem_delta(&self) -> i64;
}

impl GasMemory for ExecutionMeasurement {
    fn gas(&self) -> Gas {
        self.gas_used
    }

    fn mem_delta(&self) -> i64 {
        self.mem_delta
    }
}

/// Splits off the top decile by memory per gas, `ceil(n/10)` executions.
/// Equal ratios keep input order. Both parts preserve input order.
pub fn split_memory_intensive<E: GasMemory + Clone>(executions: &[E]) -> Result<(Vec<E>, Vec<E>), AnalysisError> {
    let n = executions.len();
    if n < 10 {
        return Err(AnalysisError::TooFewSamples(n));
    }
    if let Some(i) = executions.iter().position(|e| e.gas() == 0 || e.mem_delta() < 0) {
        return Err(AnalysisError::InvalidSample(i));
    }
    let ratio = |e: &E| e.mem_delta() as f64 / e.gas() as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratio(&executions[b]).total_cmp(&ratio(&executions[a])));
    let mut top = vec![false; n];
    for &i in &order[..n.div_ceil(10)] {
        top[i] = true;
    }
    let (mut mi, mut rest) = (Vec::new(), Vec::new());
    for (e, &is_top) in executions.iter().zip(&top) {
        if is_top {
            mi.push(e.clone())
        } else {
            rest.push(e.clone())
        }
    }
    Ok((mi, rest))
}

/// One execution as stored in measurement CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub gas: Gas,
    pub time_ns: u64,
    pub mem_plus: u64,
    pub mem_minus: u64,
    pub storage_alloc: u64,
    pub storage_free: u64,
    pub era: Era,
    /// State reads, and those served by either cache layer.
    #[serde(default)]
    pub io_reads: u64,
    #[serde(default)]
    pub cache_hits: u64,
}

impl MeasurementRow {
    pub fn from_measurement(m: &ExecutionMeasurement, era: Era) -> Self {
        MeasurementRow {
            gas: m.gas_used,
            time_ns: m.elapsed_ns,
            mem_plus: m.mem_allocated,
            mem_minus: m.mem_freed,
            storage_alloc: m.storage_words_allocated,
            storage_free: m.storage_words_freed,
            era,
            io_reads: m.io_reads,
            cache_hits: m.io_cache_hits,
        }
    }
}

impl GasMemory for MeasurementRow {
    fn gas(&self) -> Gas {
        self.gas
    }

    fn mem_delta(&self) -> i64 {
        self.mem_plus as i64 - self.mem_minus as i64
    }
}

/// Resource sets reported per phase, in table order.
pub const RESOURCE_SETS: [(&str, &[&str]); 5] = [
    ("Memory", &[MEMORY]),
    ("CPU", &[CPU]),
    ("Storage", &[STORAGE]),
    ("Storage/Memory", &[STORAGE, MEMORY]),
    ("Storage/Memory/CPU", &[STORAGE, MEMORY, CPU]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow<T> {
    pub phase: Era,
    pub resources: String,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegression<T> {
    pub phase: Era,
    pub fit: Regression<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport<T> {
    pub rows: Vec<CorrelationRow<T>>,
    /// Gas per byte of memory growth per phase; absent when memory is
    /// constant within the phase.
    pub gas_per_byte: Vec<PhaseRegression<T>>,
}

impl<T: Float> CorrelationReport<T> {
    pub fn score(&self, phase: Era, resources: &str) -> Option<T> {
        self.rows.iter().find(|r| r.phase == phase && r.resources == resources).map(|r| r.score)
    }
}

/// Scores of every resource set for each phase present, pre before post.
pub fn correlation_report<T: Float>(rows: &[MeasurementRow]) -> Result<CorrelationReport<T>, AnalysisError> {
    let mut report = CorrelationReport { rows: Vec::new(), gas_per_byte: Vec::new() };
    for phase in [Era::Pre, Era::Post] {
        let subset: Vec<MeasurementRow> = rows.iter().filter(|r| r.era == phase).copied().collect();
        if subset.is_empty() {
            continue;
        }
        let matrix = ResourceMatrix::<T>::from_rows(&subset)?;
        for (label, selection) in RESOURCE_SETS {
            let score = multivariate_correlation(&matrix, selection)?;
            report.rows.push(CorrelationRow { phase, resources: label.to_string(), score });
        }
        let mem = matrix.column(MEMORY).expect("built above");
        if let Ok(fit) = gas_per_byte_regression(mem, matrix.gas()) {
            report.gas_per_byte.push(PhaseRegression { phase, fit });
        }
    }
    if report.rows.is_empty() {
        return Err(AnalysisError::TooShort(0));
    }
    Ok(report)
}
