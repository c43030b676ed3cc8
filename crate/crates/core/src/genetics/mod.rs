//! Search for low-throughput programs.
//!
//! Programs are generated atom by atom from profile-weighted level sets,
//! recombined at positions of equal stack depth and mutated by
//! arity-preserving substitution. Fitness is gas per second; lower is
//! better.

mod evolve;
mod generate;
mod log;
mod operators;
mod universe;

pub use evolve::{
    evaluate_fitness, evolve, evolve_with_weights, fresh_state, replay, GaConfig, GenerationReplayStats,
    ProgramReplayStats, ReplayReport, ReplayRow,
};
pub use generate::{
    coverage_corpus, default_profile, generate_program, guard_atom, prepare_stack, profiling_corpus, random_atom,
    random_core, GUARD_MAX, PROFILE_PROGRAMS, PROFILE_PROGRAM_SIZE, PROFILE_REPETITIONS,
};
pub use log::{GenerationLog, GenerationRecord, LogHeader};
pub use operators::{create_stack_size_mapping, cross_over, mutate, RETRY_BUDGET};
pub use universe::{
    biased_sample, build_universe, init_weights, weight_for_throughput, InstructionUniverse, SamplingWeights,
    MAX_LEVEL, MIN_WEIGHT,
};

use crate::vm::{Opcode, VmError};

#[derive(Debug, thiserror::Error)]
pub enum GeneticsError {
    #[error("profile has no throughput for {0:?}")]
    MissingThroughput(Opcode),
    #[error("profile throughput for {0:?} is not positive")]
    InvalidThroughput(Opcode),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot evaluate an empty program")]
    EmptyProgram,
    #[error("generation log is corrupt: {0}")]
    LogCorrupt(String),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    State(#[from] crate::vm::StateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
