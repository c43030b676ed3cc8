//! Per-instruction timing statistics and the cache experiments.

mod cache;
mod stats;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use cache::{cross_block_experiment, page_cache_experiment, CrossBlockPass, PageCacheResult, SpeedupDistribution};
pub use stats::RunningStats;

use crate::vm::{ExecutionContext, Opcode, Program, StateAccess, Vm, VmError};

#[derive(Debug, thiserror::Error)]
pub enum ProfilerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed profile row: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    State(#[from] crate::vm::StateError),
}

/// Timing record of one opcode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstructionStats {
    pub opcode: Opcode,
    pub count: u64,
    pub mean_time_ns: f64,
    /// Present only when `count >= 2`.
    pub std_time_ns: Option<f64>,
    pub mean_gas: f64,
}

impl InstructionStats {
    /// Gas per microsecond; infinite when the mean time is zero.
    pub fn throughput_gas_per_us(&self) -> f64 {
        self.mean_gas / (self.mean_time_ns / 1000.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstructionProfile {
    entries: BTreeMap<Opcode, InstructionStats>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    opcode: String,
    mnemonic: String,
    count: u64,
    mean_ns: f64,
    std_ns: Option<f64>,
    mean_gas: f64,
    gas_per_us: f64,
}

impl InstructionProfile {
    pub fn from_stats(stats: impl IntoIterator<Item = InstructionStats>) -> Self {
        InstructionProfile { entries: stats.into_iter().map(|s| (s.opcode, s)).collect() }
    }

    pub fn get(&self, opcode: Opcode) -> Option<&InstructionStats> {
        self.entries.get(&opcode)
    }

    /// Entries in opcode order.
    pub fn iter(&self) -> impl Iterator<Item = &InstructionStats> + '_ {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn throughput(&self, opcode: Opcode) -> Option<f64> {
        self.get(opcode).map(InstructionStats::throughput_gas_per_us)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ProfilerError> {
        let mut w = csv::Writer::from_writer(out);
        for s in self.iter() {
            w.serialize(ProfileRow {
                opcode: format!("0x{:02x}", s.opcode.0),
                mnemonic: s.opcode.mnemonic().to_string(),
                count: s.count,
                mean_ns: s.mean_time_ns,
                std_ns: s.std_time_ns,
                mean_gas: s.mean_gas,
                gas_per_us: s.throughput_gas_per_us(),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a profile written by [`write_csv`](Self::write_csv); `#` lines are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ProfilerError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut stats = Vec::new();
        for row in r.deserialize() {
            let row: ProfileRow = row?;
            let digits = row.opcode.trim_start_matches("0x");
            let byte = u8::from_str_radix(digits, 16).map_err(|_| ProfilerError::Malformed(row.opcode.clone()))?;
            let opcode = Opcode(byte);
            if !opcode.is_supported() {
                return Err(ProfilerError::Malformed(row.opcode));
            }
            stats.push(InstructionStats {
                opcode,
                count: row.count,
                mean_time_ns: row.mean_ns,
                std_time_ns: row.std_ns,
                mean_gas: row.mean_gas,
            });
        }
        Ok(InstructionProfile::from_stats(stats))
    }
}

/// Executes every program of `corpus` `repetitions` times and aggregates
/// per-step times and gas by opcode.
///
/// State is shared across runs, so cache effects between runs are part of
/// the measurement.
pub fn profile_instructions<S: StateAccess + ?Sized>(
    corpus: &[Program],
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut S,
    repetitions: usize,
) -> Result<InstructionProfile, ProfilerError> {
    if corpus.is_empty() {
        return Err(ProfilerError::EmptyCorpus);
    }
    if repetitions == 0 {
        return Err(ProfilerError::NoRepetitions);
    }
    let vm = vm.clone().with_trace(true);
    let mut time: BTreeMap<Opcode, RunningStats> = BTreeMap::new();
    let mut gas: BTreeMap<Opcode, f64> = BTreeMap::new();
    for _ in 0..repetitions {
        for program in corpus {
            let exec = vm.execute(program, ctx, state)?;
            for step in &exec.trace {
                time.entry(step.opcode).or_default().push(step.time_ns as f64);
                *gas.entry(step.opcode).or_default() += step.gas_cost as f64;
            }
        }
    }
    let stats = time.into_iter().map(|(opcode, t)| InstructionStats {
        opcode,
        count: t.count(),
        mean_time_ns: t.mean(),
        std_time_ns: t.std_dev(),
        mean_gas: gas[&opcode] / t.count() as f64,
    });
    Ok(InstructionProfile::from_stats(stats))
}

/// [`profile_instructions`] after one unmeasured pass over `corpus`, so
/// the measured runs see the caches it leaves behind.
pub fn profile_warm<S: StateAccess + ?Sized>(
    corpus: &[Program],
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut S,
    repetitions: usize,
) -> Result<InstructionProfile, ProfilerError> {
    if corpus.is_empty() {
        return Err(ProfilerError::EmptyCorpus);
    }
    let untraced = vm.clone().with_trace(false);
    for program in corpus {
        untraced.execute(program, ctx, state)?;
    }
    profile_instructions(corpus, vm, ctx, state, repetitions)
}

/// Opcodes by descending standard deviation, then descending mean, then
/// ascending opcode byte. Entries without a deviation rank as zero.
pub fn rank_by_variance(profile: &InstructionProfile) -> Vec<Opcode> {
    let mut stats: Vec<&InstructionStats> = profile.iter().collect();
    stats.sort_by(|a, b| {
        let sa = a.std_time_ns.unwrap_or(0.0);
        let sb = b.std_time_ns.unwrap_or(0.0);
        sb.total_cmp(&sa).then(b.mean_time_ns.total_cmp(&a.mean_time_ns)).then(a.opcode.cmp(&b.opcode))
    });
    stats.into_iter().map(|s| s.opcode).collect()
}
