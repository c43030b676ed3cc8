//! Line-delimited JSON persistence of GA runs.
//!
//! The first JSON line is the run header; each following line is one
//! generation. Lines starting with `#` and blank lines are ignored.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::evolve::GaConfig;
use super::GeneticsError;
use crate::state::StateConfig;
use crate::vm::{ExecutionContext, Vm};

/// Everything needed to re-run a logged search bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: String,
    pub seed: u64,
    pub config: GaConfig,
    pub vm: Vm,
    pub ctx: ExecutionContext,
    pub state: StateConfig,
    /// Hex-encoded warm-up programs, in execution order.
    pub warmup: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub gen: usize,
    /// Hex-encoded programs, in evaluation order.
    pub programs: Vec<String>,
    /// Leading programs carried over as elites. Their fitness is copied
    /// from the previous generation and they are not executed again.
    #[serde(default)]
    pub carried: usize,
    /// Gas per second, aligned with `programs`.
    pub fitness: Vec<f64>,
    /// Lowest fitness seen up to and including this generation.
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub header: LogHeader,
    pub records: Vec<GenerationRecord>,
}

impl GenerationLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), GeneticsError> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, GeneticsError> {
        let mut header = None;
        let mut records = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let corrupt = |e: serde_json::Error| GeneticsError::LogCorrupt(format!("line {}: {e}", n + 1));
            if header.is_none() {
                header = Some(serde_json::from_str(text).map_err(corrupt)?);
            } else {
                let record: GenerationRecord = serde_json::from_str(text).map_err(corrupt)?;
                if record.programs.len() != record.fitness.len() {
                    return Err(GeneticsError::LogCorrupt(format!(
                        "line {}: {} programs but {} fitness values",
                        n + 1,
                        record.programs.len(),
                        record.fitness.len()
                    )));
                }
                if record.carried > record.programs.len() {
                    return Err(GeneticsError::LogCorrupt(format!(
                        "line {}: {} carried programs out of {}",
                        n + 1,
                        record.carried,
                        record.programs.len()
                    )));
                }
                records.push(record);
            }
        }
        let header = header.ok_or_else(|| GeneticsError::LogCorrupt("missing header".into()))?;
        Ok(GenerationLog { header, records })
    }

    /// Best-so-far fitness per generation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best).collect()
    }
}
