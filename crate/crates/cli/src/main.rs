//! `rea`: command-line driver for the profiling, search, cache and
//! correlation experiments.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rea_core::state::{KvStore, StateBackend};

use commands::{CacheBenchArgs, Output};
use config::{header_line, parse_file, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rea", version, about = "Gas and resource experiments on a metered EVM subset")]
struct Cli {
    /// Flat key=value file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// wall or simulated.
    #[arg(long, global = true)]
    clock: Option<String>,
    /// pre or post.
    #[arg(long, global = true)]
    era: Option<String>,
    /// Append-only state store file.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    lru_capacity: Option<usize>,
    #[arg(long, global = true)]
    page_capacity: Option<usize>,
    #[arg(long, global = true)]
    lru_hit_ns: Option<u64>,
    #[arg(long, global = true)]
    page_hit_ns: Option<u64>,
    #[arg(long, global = true)]
    miss_ns: Option<u64>,
    #[arg(long, global = true)]
    write_ns: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-instruction timing profile of a seeded random corpus.
    Profile,
    /// Search for low-throughput programs.
    Evolve {
        #[arg(long)]
        pop: Option<usize>,
        #[arg(long)]
        gens: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        gas_limit: Option<u64>,
        /// Instruction profile to weight generation by; measured when absent.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Re-execute a generation log in its original order.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Cold versus warm cache timings and cross-block cache persistence.
    CacheBench(CacheBenchArgs),
    /// Correlation of gas with resource usage from a measurement CSV.
    Analyze {
        #[arg(long)]
        input: PathBuf,
    },
    /// Measurement CSV of the storage workload under both schedules.
    Measure {
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let mut flags = BTreeMap::new();
        let mut put = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                flags.insert(key.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("seed", self.seed.map(|v| v.to_string()));
        put("clock", self.clock.clone());
        put("era", self.era.clone());
        put("state", path(&self.state));
        put("out", path(&self.out));
        put("lru_capacity", self.lru_capacity.map(|v| v.to_string()));
        put("page_capacity", self.page_capacity.map(|v| v.to_string()));
        put("lru_hit_ns", self.lru_hit_ns.map(|v| v.to_string()));
        put("page_hit_ns", self.page_hit_ns.map(|v| v.to_string()));
        put("miss_ns", self.miss_ns.map(|v| v.to_string()));
        put("write_ns", self.write_ns.map(|v| v.to_string()));
        if let Command::Evolve { pop, gens, size, gas_limit, .. } = &self.command {
            put("pop", pop.map(|v| v.to_string()));
            put("gens", gens.map(|v| v.to_string()));
            put("size", size.map(|v| v.to_string()));
            put("gas_limit", gas_limit.map(|v| v.to_string()));
        }
        flags
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                parse_file(&text)?
            }
            None => BTreeMap::new(),
        };
        RunConfig::resolve(&file, &self.flags())
    }
}

impl Command {
    /// Subcommand settings that enter the config hash.
    fn describe(&self) -> String {
        match self {
            Command::Profile => "profile".into(),
            Command::Evolve { profile, .. } => {
                format!("evolve profile={}", if profile.is_some() { "file" } else { "measured" })
            }
            Command::Replay { k, .. } => format!("replay k={k}"),
            Command::CacheBench(args) => format!("cache-bench {}", args.describe()),
            Command::Analyze { .. } => "analyze".into(),
            Command::Measure { count } => format!("measure count={count}"),
        }
    }
}

fn run_with_state<S: KvStore>(
    command: &Command,
    config: &RunConfig,
    state: &mut StateBackend<S>,
    out: &mut Output,
) -> Result<(), CliError> {
    match command {
        Command::Profile => commands::profile(config, out),
        Command::Evolve { profile, .. } => commands::evolve_cmd(config, profile.as_deref(), state, out),
        Command::Replay { log, k } => commands::replay_cmd(&commands::read_log(log)?, *k, Some(state), out),
        Command::CacheBench(args) => commands::cache_bench(config, args, state, out),
        Command::Analyze { input } => commands::analyze(input, out),
        Command::Measure { count } => commands::measure(config, *count, state, out),
    }?;
    state.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = cli.resolve()?;
    let mut out = Output::new(&config.out, header_line(&config, &cli.command.describe()))?;
    match (&config.state, &cli.command) {
        (Some(path), _) => {
            let mut state = StateBackend::open(path, config.state_config())?;
            run_with_state(&cli.command, &config, &mut state, &mut out)?;
        }
        // A replay without a store runs on the backend recorded in the log.
        (None, Command::Replay { log, k }) => {
            commands::replay_cmd::<rea_core::state::MemStore>(&commands::read_log(log)?, *k, None, &mut out)?;
        }
        (None, _) => {
            let mut state = StateBackend::in_memory(config.state_config());
            run_with_state(&cli.command, &config, &mut state, &mut out)?;
        }
    }
    Ok(out.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rea: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
