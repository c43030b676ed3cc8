//! Throughput fitness, the evolution loop and replay of saved runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::generate_program;
use super::log::{GenerationLog, GenerationRecord, LogHeader};
use super::operators::{cross_over, mutate};
use super::universe::{build_universe, init_weights, InstructionUniverse, SamplingWeights};
use super::GeneticsError;
use crate::profiler::InstructionProfile;
use crate::state::{KvStore, StateBackend};
use crate::vm::{ClockMode, ExecutionContext, Gas, Program, StateAccess, Vm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    /// Target instruction count of generated programs.
    pub program_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub rng_seed: u64,
    pub gas_limit: Gas,
    pub clock: ClockMode,
    /// Random programs run after the caches are dropped and before the
    /// first generation.
    pub warmup_programs: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 64,
            program_size: 4000,
            generations: 50,
            tournament_size: 4,
            elite_count: 2,
            crossover_probability: 0.9,
            mutation_probability: 0.2,
            rng_seed: 0,
            gas_limit: 10_000_000,
            clock: ClockMode::Simulated,
            warmup_programs: 8,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GeneticsError> {
        let bad = |msg: &str| Err(GeneticsError::InvalidConfig(msg.to_string()));
        if self.population_size == 0 {
            return bad("population_size must be positive");
        }
        if self.elite_count >= self.population_size {
            return bad("elite_count must be below population_size");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be positive");
        }
        if self.program_size == 0 {
            return bad("program_size must be positive");
        }
        for (name, p) in
            [("crossover_probability", self.crossover_probability), ("mutation_probability", self.mutation_probability)]
        {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Gas per second of one execution. Out-of-gas runs count the whole limit.
pub fn evaluate_fitness<S: StateAccess + ?Sized>(
    program: &Program,
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut S,
) -> Result<f64, GeneticsError> {
    if program.is_empty() {
        return Err(GeneticsError::EmptyProgram);
    }
    let m = vm.execute(program, ctx, state)?.measurement;
    Ok(if m.elapsed_ns > 0 { m.gas_used as f64 * 1e9 / m.elapsed_ns as f64 } else { f64::INFINITY })
}

fn evaluate_generation<S: KvStore>(
    population: &[Program],
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<Vec<f64>, GeneticsError> {
    population.iter().map(|p| evaluate_fitness(p, vm, ctx, state)).collect()
}

fn run_warmup<S: KvStore>(
    warmup: &[Program],
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<(), GeneticsError> {
    state.drop_caches();
    for p in warmup {
        vm.execute(p, ctx, state)?;
    }
    Ok(())
}

fn tournament<R: Rng + ?Sized>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Indices sorted by ascending fitness, ties by index.
fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    idx
}

/// The next population with the elites first, and their fitness values.
fn next_generation<R: Rng + ?Sized>(
    population: &[Program],
    fitness: &[f64],
    config: &GaConfig,
    universe: &InstructionUniverse,
    rng: &mut R,
) -> (Vec<Program>, Vec<f64>) {
    let elites = &ranking(fitness)[..config.elite_count];
    let carried = elites.iter().map(|&i| fitness[i]).collect();
    let mut next: Vec<Program> = elites.iter().map(|&i| population[i].clone()).collect();
    while next.len() < config.population_size {
        let a = &population[tournament(fitness, config.tournament_size, rng)];
        let b = &population[tournament(fitness, config.tournament_size, rng)];
        let (c1, c2) =
            if rng.random_bool(config.crossover_probability) { cross_over(a, b, rng) } else { (a.clone(), b.clone()) };
        for child in [c1, c2] {
            if next.len() == config.population_size {
                break;
            }
            let child =
                if rng.random_bool(config.mutation_probability) { mutate(&child, universe, rng) } else { child };
            next.push(child);
        }
    }
    (next, carried)
}

/// Runs the search.
///
/// Caches are dropped and warmed up with random programs; the resulting
/// state is snapshotted and restored at the start of every generation,
/// whose individuals then run serially on the evolving state. Elites keep
/// their measured fitness and are not executed again. Lower fitness is
/// better.
pub fn evolve<S: KvStore>(
    config: &GaConfig,
    profile: &InstructionProfile,
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<GenerationLog, GeneticsError> {
    config.validate()?;
    let universe = build_universe();
    let weights = init_weights(&universe, profile)?;
    evolve_with_weights(config, &universe, &weights, vm, ctx, state)
}

pub fn evolve_with_weights<S: KvStore>(
    config: &GaConfig,
    universe: &InstructionUniverse,
    weights: &SamplingWeights,
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<GenerationLog, GeneticsError> {
    config.validate()?;
    let vm = Vm { clock: config.clock, trace: false, ..vm.clone() };
    let ctx = ExecutionContext { gas_limit: config.gas_limit, ..ctx.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let warmup: Vec<Program> = (0..config.warmup_programs)
        .map(|_| generate_program(config.program_size, universe, weights, &mut rng))
        .collect();
    run_warmup(&warmup, &vm, &ctx, state)?;
    let snapshot = state.snapshot();

    let mut population: Vec<Program> = (0..config.population_size)
        .map(|_| generate_program(config.program_size, universe, weights, &mut rng))
        .collect();
    let mut carried = Vec::new();
    let mut records = Vec::with_capacity(config.generations + 1);
    let mut best = f64::INFINITY;
    for gen in 0..=config.generations {
        state.restore(&snapshot)?;
        let mut fitness = carried;
        fitness.extend(evaluate_generation(&population[fitness.len()..], &vm, &ctx, state)?);
        best = fitness.iter().copied().fold(best, f64::min);
        records.push(GenerationRecord {
            gen,
            programs: population.iter().map(Program::to_hex).collect(),
            carried: if gen == 0 { 0 } else { config.elite_count },
            fitness: fitness.clone(),
            best,
        });
        if gen == config.generations {
            break;
        }
        (population, carried) = next_generation(&population, &fitness, config, universe, &mut rng);
    }
    let header = LogHeader {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.rng_seed,
        config: config.clone(),
        vm,
        ctx,
        state: *state.config(),
        warmup: warmup.iter().map(Program::to_hex).collect(),
    };
    Ok(GenerationLog { header, records })
}

/// One execution of one logged program in one replay pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub run: usize,
    pub gen: usize,
    pub index: usize,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramReplayStats {
    pub gen: usize,
    pub index: usize,
    pub logged: f64,
    pub mean: f64,
    /// Sample standard deviation over passes; zero for a single pass.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationReplayStats {
    pub gen: usize,
    /// Lowest per-program mean.
    pub best: f64,
    pub mean: f64,
    /// Mean of the per-program standard deviations.
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rows: Vec<ReplayRow>,
    pub programs: Vec<ProgramReplayStats>,
    pub generations: Vec<GenerationReplayStats>,
}

/// A backend configured as the logged run's was, with empty data.
pub fn fresh_state(log: &GenerationLog) -> StateBackend {
    StateBackend::in_memory(log.header.state)
}

/// Re-executes the logged warm-up and every generation, in order, `k`
/// times. Carried elites are skipped, as in the original run. Each pass starts from the state `state` holds on entry, which is
/// restored afterwards.
pub fn replay<S: KvStore>(
    log: &GenerationLog,
    k: usize,
    state: &mut StateBackend<S>,
) -> Result<ReplayReport, GeneticsError> {
    if log.records.is_empty() || k == 0 {
        return Ok(ReplayReport::default());
    }
    let decode = |hex: &String| {
        Program::from_hex(hex).map_err(|e| GeneticsError::LogCorrupt(format!("program {hex:.16}...: {e}")))
    };
    let warmup: Vec<Program> = log.header.warmup.iter().map(decode).collect::<Result<_, _>>()?;
    let generations: Vec<Vec<Program>> = log
        .records
        .iter()
        .map(|r| r.programs.iter().map(decode).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let vm = &log.header.vm;
    let ctx = &log.header.ctx;
    let fresh = state.snapshot();
    let mut rows = Vec::new();
    for run in 0..k {
        state.restore(&fresh)?;
        run_warmup(&warmup, vm, ctx, state)?;
        let snapshot = state.snapshot();
        for (record, population) in log.records.iter().zip(&generations) {
            state.restore(&snapshot)?;
            for (index, p) in population.iter().enumerate().skip(record.carried) {
                let fitness = evaluate_fitness(p, vm, ctx, state)?;
                rows.push(ReplayRow { run, gen: record.gen, index, fitness });
            }
        }
    }
    state.restore(&fresh)?;

    let per_run = rows.len() / k;
    let mut programs = Vec::with_capacity(per_run);
    let mut offset = 0;
    for record in &log.records {
        for (index, &logged) in record.fitness.iter().enumerate().skip(record.carried) {
            let xs: Vec<f64> = (0..k).map(|r| rows[r * per_run + offset].fitness).collect();
            // Offsets from the first pass keep identical passes exact.
            let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / k as f64;
            let std =
                if k >= 2 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt() } else { 0.0 };
            programs.push(ProgramReplayStats { gen: record.gen, index, logged, mean, std });
            offset += 1;
        }
    }
    let generations = log
        .records
        .iter()
        .map(|record| {
            let ps: Vec<&ProgramReplayStats> = programs.iter().filter(|p| p.gen == record.gen).collect();
            let n = ps.len().max(1) as f64;
            GenerationReplayStats {
                gen: record.gen,
                best: ps.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min),
                mean: ps.iter().map(|p| p.mean).sum::<f64>() / n,
                std: ps.iter().map(|p| p.std).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(ReplayReport { rows, programs, generations })
}
