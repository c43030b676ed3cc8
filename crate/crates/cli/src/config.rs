//! Run configuration: a flat `key=value` file overridden by flags.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use rea_core::genetics::GaConfig;
use rea_core::state::{IoCostModel, StateConfig};
use rea_core::vm::{ClockMode, Era, ExecutionContext, GasSchedule, Vm};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Keys accepted in config files, in canonical order.
pub const KEYS: [&str; 15] = [
    "seed",
    "clock",
    "era",
    "state",
    "out",
    "lru_capacity",
    "page_capacity",
    "lru_hit_ns",
    "page_hit_ns",
    "miss_ns",
    "write_ns",
    "pop",
    "gens",
    "size",
    "gas_limit",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub clock: ClockMode,
    pub era: Era,
    /// Append-only store file; in memory when absent.
    pub state: Option<PathBuf>,
    pub out: PathBuf,
    pub lru_capacity: usize,
    pub page_capacity: usize,
    pub costs: IoCostModel,
    pub pop: usize,
    pub gens: usize,
    pub size: usize,
    pub gas_limit: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let state = StateConfig::default();
        let ga = GaConfig::default();
        RunConfig {
            seed: 0,
            clock: ClockMode::Simulated,
            era: Era::Post,
            state: None,
            out: PathBuf::from("."),
            lru_capacity: state.lru_capacity,
            page_capacity: state.page_capacity,
            costs: state.costs,
            pop: ga.population_size,
            gens: ga.generations,
            size: ga.program_size,
            gas_limit: ga.gas_limit,
        }
    }
}

/// Parses a config file. Blank lines and `#` comments are ignored; unknown
/// and repeated keys are errors.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key=value", n + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("line {}: unknown key `{key}`", n + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: `{key}` given twice", n + 1)));
        }
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::Config(format!("{key}={value}: {e}")))
}

impl RunConfig {
    /// Applies `file` and then `flags` over the defaults.
    pub fn resolve(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut merged = file.clone();
        merged.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut c = RunConfig::default();
        for (key, value) in &merged {
            match key.as_str() {
                "seed" => c.seed = parse(key, value)?,
                "clock" => c.clock = parse(key, value)?,
                "era" => c.era = parse(key, value)?,
                "state" => c.state = Some(PathBuf::from(value)),
                "out" => c.out = PathBuf::from(value),
                "lru_capacity" => c.lru_capacity = parse(key, value)?,
                "page_capacity" => c.page_capacity = parse(key, value)?,
                "lru_hit_ns" => c.costs.lru_hit_ns = parse(key, value)?,
                "page_hit_ns" => c.costs.page_hit_ns = parse(key, value)?,
                "miss_ns" => c.costs.miss_ns = parse(key, value)?,
                "write_ns" => c.costs.write_ns = parse(key, value)?,
                "pop" => c.pop = parse(key, value)?,
                "gens" => c.gens = parse(key, value)?,
                "size" => c.size = parse(key, value)?,
                "gas_limit" => c.gas_limit = parse(key, value)?,
                other => return Err(CliError::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(c)
    }

    /// Every setting that can change results, one `key=value` per line.
    /// The output directory is left out and the store only contributes
    /// whether one is used.
    pub fn canonical(&self) -> String {
        let state = if self.state.is_some() { "file" } else { "memory" };
        [
            format!("seed={}", self.seed),
            format!("clock={}", self.clock),
            format!("era={}", self.era),
            format!("state={state}"),
            format!("lru_capacity={}", self.lru_capacity),
            format!("page_capacity={}", self.page_capacity),
            format!("lru_hit_ns={}", self.costs.lru_hit_ns),
            format!("page_hit_ns={}", self.costs.page_hit_ns),
            format!("miss_ns={}", self.costs.miss_ns),
            format!("write_ns={}", self.costs.write_ns),
            format!("pop={}", self.pop),
            format!("gens={}", self.gens),
            format!("size={}", self.size),
            format!("gas_limit={}", self.gas_limit),
        ]
        .join("\n")
    }

    pub fn state_config(&self) -> StateConfig {
        StateConfig {
            lru_capacity: self.lru_capacity,
            page_capacity: self.page_capacity,
            costs: self.costs,
            seed: self.seed,
        }
    }

    pub fn vm(&self) -> Vm {
        self.vm_for(self.era)
    }

    pub fn vm_for(&self, era: Era) -> Vm {
        Vm::new(GasSchedule::new(era), self.clock)
    }

    pub fn ctx(&self) -> ExecutionContext {
        ExecutionContext::default().with_gas_limit(self.gas_limit)
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            population_size: self.pop,
            program_size: self.size,
            generations: self.gens,
            rng_seed: self.seed,
            gas_limit: self.gas_limit,
            clock: self.clock,
            ..GaConfig::default()
        }
    }
}

/// First line of every output file.
pub fn header_line(config: &RunConfig, command: &str) -> String {
    let digest = Sha256::digest(format!("{}\ncommand={command}", config.canonical()).as_bytes());
    format!("# rea {} seed={} config={}", env!("CARGO_PKG_VERSION"), config.seed, hex::encode(digest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flags_override_file() {
        let file = parse_file("# comment\nseed = 5\nera=pre\n\nmiss-ns=10\n").unwrap();
        let c = RunConfig::resolve(&file, &map(&[("seed", "9")])).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.era, Era::Pre);
        assert_eq!(c.costs.miss_ns, 10);
        assert_eq!(c.clock, ClockMode::Simulated);
    }

    #[test]
    fn bad_files_are_config_errors() {
        for text in ["seed", "colour=red", "seed=1\nseed=2"] {
            assert!(matches!(parse_file(text), Err(CliError::Config(_))), "{text}");
        }
        let bad = map(&[("clock", "sundial")]);
        assert!(matches!(RunConfig::resolve(&bad, &BTreeMap::new()), Err(CliError::Config(_))));
        let bad = map(&[("pop", "-1")]);
        assert!(matches!(RunConfig::resolve(&bad, &BTreeMap::new()), Err(CliError::Config(_))));
    }

    #[test]
    fn header_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig { out: PathBuf::from("/elsewhere"), ..RunConfig::default() };
        assert_eq!(header_line(&a, "profile"), header_line(&b, "profile"));
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(header_line(&a, "profile"), header_line(&c, "profile"));
        assert_ne!(header_line(&a, "profile"), header_line(&a, "evolve"));
        let line = header_line(&a, "profile");
        assert!(line.starts_with("# rea 0.1.0 seed=0 config="));
        assert_eq!(line.rsplit('=').next().unwrap().len(), 64);
    }
}
