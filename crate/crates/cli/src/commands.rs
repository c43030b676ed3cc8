//! Subcommands as thin wrappers over the core library, with files as
//! boundaries.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rea_core::analysis::{
    correlation_report, read_measurements, write_measurements, write_report, write_scatter, MeasurementRow,
};
use rea_core::genetics::{default_profile, evolve, fresh_state, replay, GenerationLog};
use rea_core::profiler::{cross_block_experiment, page_cache_experiment, InstructionProfile, SpeedupDistribution};
use rea_core::state::{KvStore, StateBackend};
use rea_core::vm::{Era, Program};
use rea_core::workload::{self, SLOAD_STEP_GAS};

use crate::config::RunConfig;
use crate::error::CliError;

/// Writes files into the output directory, each behind the run header.
pub struct Output {
    dir: PathBuf,
    header: String,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, header: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::output(dir.display(), e))?;
        Ok(Output { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    fn write<E>(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<(), CliError>
    where
        CliError: From<E>,
    {
        let mut buf = format!("{}\n", self.header).into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf).map_err(|e| CliError::output(path.display(), e))?;
        self.written.push(path);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        self.write(name, |buf| -> Result<(), CliError> {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header).map_err(|e| CliError::output(name, e))?;
            for row in rows {
                w.write_record(row).map_err(|e| CliError::output(name, e))?;
            }
            w.flush().map_err(|e| CliError::output(name, e))?;
            Ok(())
        })
    }
}

fn open_input(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path).map(BufReader::new).map_err(|e| CliError::input(path.display(), e))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn measure_profile(config: &RunConfig) -> Result<InstructionProfile, CliError> {
    let mut state = StateBackend::in_memory(config.state_config());
    Ok(default_profile(&config.vm(), &config.ctx(), &mut state, config.seed)?)
}

pub fn profile(config: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let profile = measure_profile(config)?;
    out.write("instruction_profile.csv", |buf| profile.write_csv(buf))
}

pub fn evolve_cmd<S: KvStore>(
    config: &RunConfig,
    profile_path: Option<&Path>,
    state: &mut StateBackend<S>,
    out: &mut Output,
) -> Result<(), CliError> {
    let profile = match profile_path {
        Some(path) => {
            InstructionProfile::read_csv(open_input(path)?).map_err(|e| CliError::input(path.display(), e))?
        }
        None => {
            let profile = measure_profile(config)?;
            out.write("instruction_profile.csv", |buf| profile.write_csv(buf))?;
            profile
        }
    };
    let log = evolve(&config.ga_config(), &profile, &config.vm(), &config.ctx(), state)?;
    out.write("log.jsonl", |buf| log.write_jsonl(buf))?;
    let rows = log
        .records
        .iter()
        .map(|r| {
            let (mean, std) = mean_std(&r.fitness);
            vec![r.gen.to_string(), r.best.to_string(), mean.to_string(), std.to_string()]
        })
        .collect();
    out.write_csv("summary.csv", &["gen", "best", "mean", "std"], rows)
}

pub fn read_log(path: &Path) -> Result<GenerationLog, CliError> {
    GenerationLog::read_jsonl(open_input(path)?).map_err(|e| CliError::input(path.display(), e))
}

pub fn replay_cmd<S: KvStore>(
    log: &GenerationLog,
    k: usize,
    state: Option<&mut StateBackend<S>>,
    out: &mut Output,
) -> Result<(), CliError> {
    let report = match state {
        Some(state) => replay(log, k, state)?,
        None => replay(log, k, &mut fresh_state(log))?,
    };
    let rows = report
        .programs
        .iter()
        .map(|p| {
            vec![p.gen.to_string(), p.index.to_string(), p.logged.to_string(), p.mean.to_string(), p.std.to_string()]
        })
        .collect();
    out.write_csv("replay.csv", &["gen", "index", "logged", "mean", "std"], rows)?;
    let rows = report
        .generations
        .iter()
        .map(|g| vec![g.gen.to_string(), g.best.to_string(), g.mean.to_string(), g.std.to_string()])
        .collect();
    out.write_csv("replay_summary.csv", &["gen", "best", "mean", "std"], rows)
}

/// Contracts exercised by `cache-bench`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Corpus {
    /// SLOADs of fresh slots.
    Storage,
    /// Arithmetic only.
    Compute,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CacheBenchArgs {
    #[arg(long, value_enum, default_value = "storage")]
    pub corpus: Corpus,
    #[arg(long, default_value_t = 100)]
    pub contracts: usize,
    /// Approximate gas of each page-cache contract.
    #[arg(long, default_value_t = 800_000)]
    pub contract_gas: u64,
    /// Warm and cold runs per contract.
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    /// Block counts of the cross-block experiment.
    #[arg(long, value_delimiter = ',', default_value = "14,16")]
    pub blocks: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub passes: usize,
    #[arg(long, default_value_t = 900_000)]
    pub block_gas: u64,
    #[arg(long, default_value_t = 90_000)]
    pub block_contract_gas: u64,
}

impl CacheBenchArgs {
    pub fn describe(&self) -> String {
        format!(
            "corpus={:?} contracts={} contract_gas={} runs={} blocks={:?} passes={} block_gas={} block_contract_gas={}",
            self.corpus,
            self.contracts,
            self.contract_gas,
            self.runs,
            self.blocks,
            self.passes,
            self.block_gas,
            self.block_contract_gas
        )
    }

    fn contracts(&self, count: usize, gas: u64, rng: &mut ChaCha8Rng) -> Vec<Program> {
        match self.corpus {
            Corpus::Storage => workload::storage_heavy_contracts(count, gas, 100, rng),
            Corpus::Compute => workload::compute_contracts(count, (gas / SLOAD_STEP_GAS).max(1) as usize, rng),
        }
    }

    fn blocks(&self, n_blocks: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Program>>, CliError> {
        if self.block_contract_gas == 0 {
            return Err(CliError::Config("block-contract-gas must be positive".into()));
        }
        Ok(match self.corpus {
            Corpus::Storage => workload::storage_blocks(n_blocks, self.block_gas, self.block_contract_gas, rng),
            Corpus::Compute => {
                let per_block = (self.block_gas / self.block_contract_gas) as usize;
                (0..n_blocks).map(|_| self.contracts(per_block, self.block_contract_gas, rng)).collect()
            }
        })
    }
}

pub fn cache_bench<S: KvStore>(
    config: &RunConfig,
    args: &CacheBenchArgs,
    state: &mut StateBackend<S>,
    out: &mut Output,
) -> Result<(), CliError> {
    if args.contracts == 0 || args.runs == 0 {
        return Err(CliError::Config("contracts and runs must be positive".into()));
    }
    let vm = config.vm();
    let ctx = config.ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for (i, contract) in args.contracts(args.contracts, args.contract_gas, &mut rng).iter().enumerate() {
        let r = page_cache_experiment(contract, args.runs, &vm, &ctx, state)?;
        rows.push(vec![i.to_string(), r.warm_mean_ns.to_string(), r.cold_mean_ns.to_string(), r.ratio.to_string()]);
        ratios.push(r.ratio);
    }
    out.write_csv("cache_speedup.csv", &["contract", "warm_mean_ns", "cold_mean_ns", "ratio"], rows)?;
    let dist = SpeedupDistribution::from_ratios(ratios)
        .ok_or_else(|| CliError::Other("a contract produced a non-positive ratio".into()))?;
    let bins = dist.bins.iter().map(|(edge, count)| vec![edge.to_string(), count.to_string()]).collect();
    out.write_csv("cache_histogram.csv", &["bin", "count"], bins)?;

    if args.passes < 2 {
        return Err(CliError::Config("passes must be at least 2".into()));
    }
    let mut rows = Vec::new();
    for &n_blocks in &args.blocks {
        if n_blocks == 0 {
            return Err(CliError::Config("block counts must be positive".into()));
        }
        let blocks = args.blocks(n_blocks, &mut rng)?;
        for p in cross_block_experiment(&blocks, args.passes, &vm, &ctx, state)? {
            rows.push(vec![n_blocks.to_string(), p.pass.to_string(), p.total_ns.to_string(), p.warm_up.to_string()]);
        }
    }
    out.write_csv("cross_block.csv", &["blocks", "pass", "total_ns", "warm_up"], rows)
}

pub fn analyze(input: &Path, out: &mut Output) -> Result<(), CliError> {
    let rows = read_measurements(open_input(input)?).map_err(|e| CliError::input(input.display(), e))?;
    let report = correlation_report::<f64>(&rows).map_err(|e| CliError::input(input.display(), e))?;
    out.write("correlation.csv", |buf| write_report(&report, buf))?;
    out.write("scatter.csv", |buf| write_scatter(&rows, buf))
}

/// Executes the storage workload under both schedules from the same
/// starting state.
pub fn measure<S: KvStore>(
    config: &RunConfig,
    count: usize,
    state: &mut StateBackend<S>,
    out: &mut Output,
) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let programs = workload::storage_workload(count, &mut rng);
    let ctx = config.ctx();
    let start = state.snapshot();
    let mut rows = Vec::with_capacity(2 * count);
    for era in [Era::Pre, Era::Post] {
        state.restore(&start)?;
        let vm = config.vm_for(era);
        for p in &programs {
            let m = vm.execute(p, &ctx, state)?.measurement;
            rows.push(MeasurementRow::from_measurement(&m, era));
        }
    }
    state.restore(&start)?;
    out.write("measurements.csv", |buf| write_measurements(&rows, buf))
}
