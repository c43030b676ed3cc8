//! Resource-exhaustion analysis for an EVM-subset virtual machine.
//!
//! The crate is organised bottom-up: [`vm`] executes loop-free programs and
//! measures gas, time and memory; [`state`] provides cached contract state;
//! [`profiler`] times individual instructions and cache behaviour;
//! [`genetics`] searches for slow programs; [`analysis`] correlates
//! measurements with gas. [`workload`] builds the corpora the experiments
//! run on.

pub mod analysis;
pub mod genetics;
pub mod profiler;
pub mod state;
pub mod vm;
pub mod workload;

pub type ResourceMatrix = analysis::ResourceMatrix<f64>;
pub type ResourceMatrixF32 = analysis::ResourceMatrix<f32>;
pub type CorrelationReport = analysis::CorrelationReport<f64>;
pub type CorrelationReportF32 = analysis::CorrelationReport<f32>;
pub type Regression = analysis::Regression<f64>;
pub type RegressionF32 = analysis::Regression<f32>;
