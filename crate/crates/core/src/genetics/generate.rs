//! Random construction of stack-safe programs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::universe::{build_universe, InstructionUniverse, SamplingWeights};
use crate::profiler::{profile_warm, InstructionProfile, ProfilerError};
use crate::vm::{Atom, ExecutionContext, Instruction, Opcode, Program, StateAccess, Vm, STACK_LIMIT};

/// Largest value a guard pins a memory argument to.
pub const GUARD_MAX: u8 = 255;

/// A core instruction with random immediate bytes.
pub fn random_core<R: Rng + ?Sized>(opcode: Opcode, rng: &mut R) -> Instruction {
    match opcode.immediate_len() {
        0 => Instruction::op(opcode),
        n => {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes[..n]);
            Instruction::push(&bytes[..n])
        }
    }
}

/// Wraps a memory-using core in guards: one POP per guarded argument
/// followed by as many PUSH1s of values up to [`GUARD_MAX`]. Other cores
/// are returned bare.
pub fn guard_atom<R: Rng + ?Sized>(core: Instruction, rng: &mut R) -> Atom {
    if !core.opcode.info().is_ok_and(|i| i.uses_memory) {
        return Atom::bare(core);
    }
    let k = core.opcode.guard_width();
    let pins: Vec<u8> = (0..k).map(|_| rng.random_range(0..=GUARD_MAX)).collect();
    Atom::guarded(core, k, &pins)
}

/// Appends `core` to `program`, guarded when it addresses memory.
///
/// The caller guarantees the stack holds at least `a(core)` elements at
/// the end of `program`.
pub fn prepare_stack<R: Rng + ?Sized>(program: &mut Program, core: Instruction, rng: &mut R) {
    program.atoms.push(guard_atom(core, rng));
}

/// A random atom whose core is drawn for the given stack depth.
pub fn random_atom<R: Rng + ?Sized>(depth: usize, weights: &SamplingWeights, rng: &mut R) -> Atom {
    let opcode = weights.sample(depth, rng);
    guard_atom(random_core(opcode, rng), rng)
}

/// Builds a program of at least `size` instructions (guards included) by
/// tracking the stack depth and sampling each core from the level set the
/// depth allows.
pub fn generate_program<R: Rng + ?Sized>(
    size: usize,
    universe: &InstructionUniverse,
    weights: &SamplingWeights,
    rng: &mut R,
) -> Program {
    debug_assert!(universe.level(0).iter().all(|op| weights.weight(*op).is_some()));
    let mut program = Program::default();
    let mut depth = 0usize;
    let mut count = 0usize;
    while count < size {
        let atom = loop {
            let atom = random_atom(depth, weights, rng);
            if depth as isize + atom.peak_rise() <= STACK_LIMIT as isize {
                break atom;
            }
        };
        depth = (depth as isize + atom.stack_delta()) as usize;
        count += atom.len();
        program.atoms.push(atom);
    }
    program
}

/// One program per instruction of the universe, each running it `repeats`
/// times on freshly pushed random arguments.
pub fn coverage_corpus<R: Rng + ?Sized>(universe: &InstructionUniverse, repeats: usize, rng: &mut R) -> Vec<Program> {
    universe
        .instructions()
        .iter()
        .map(|&opcode| {
            let arity = opcode.info().map_or(0, |i| i.arity_in);
            let mut program = Program::default();
            for _ in 0..repeats {
                for _ in 0..arity {
                    program.atoms.push(Atom::bare(random_core(Opcode::push(32), rng)));
                }
                prepare_stack(&mut program, random_core(opcode, rng), rng);
            }
            program
        })
        .collect()
}

/// Uniform random programs in the default profiling corpus.
pub const PROFILE_PROGRAMS: usize = 16;
/// Instruction count of each of those programs.
pub const PROFILE_PROGRAM_SIZE: usize = 200;
/// Measured passes over the default profiling corpus.
pub const PROFILE_REPETITIONS: usize = 3;

/// Profile of the default corpus drawn from `seed`, measured after one
/// warm pass on `state`.
pub fn default_profile<S: StateAccess + ?Sized>(
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut S,
    seed: u64,
) -> Result<InstructionProfile, ProfilerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = profiling_corpus(&build_universe(), PROFILE_PROGRAMS, PROFILE_PROGRAM_SIZE, &mut rng);
    profile_warm(&corpus, vm, ctx, state, PROFILE_REPETITIONS)
}

/// Corpus for instruction profiling: full coverage of the universe plus
/// `random` uniformly weighted programs of `size` instructions.
pub fn profiling_corpus<R: Rng + ?Sized>(
    universe: &InstructionUniverse,
    random: usize,
    size: usize,
    rng: &mut R,
) -> Vec<Program> {
    let uniform = SamplingWeights::uniform(universe);
    let mut corpus = coverage_corpus(universe, 4, rng);
    corpus.extend((0..random).map(|_| generate_program(size, universe, &uniform, rng)));
    corpus
}
