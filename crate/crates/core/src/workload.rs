//! Hand-shaped corpora for the measurement experiments.
//!
//! Every program here is stack safe and guarded like generated ones, so it
//! runs through the same validation and metering path.

use rand::Rng;

use crate::vm::{Atom, ExecutionContext, Instruction, Opcode, Program, Word};

/// Bytes per memory word.
const WORD: usize = 32;
/// Most memory words one storage program stages; a single pinned
/// CALLDATACOPY reaches 255 + 255 bytes.
pub const MAX_STAGED_WORDS: usize = 15;

fn push_random<R: Rng + ?Sized>(program: &mut Program, rng: &mut R) {
    let mut bytes = [0u8; 32];
    rng.fill(&mut bytes);
    bytes[0] |= 1;
    program.atoms.push(Atom::bare(Instruction::push(&bytes)));
}

fn bare(program: &mut Program, opcode: Opcode) {
    program.atoms.push(Atom::bare(Instruction::op(opcode)));
}

/// Grows memory to exactly `words` words with one CALLDATACOPY.
fn stage_memory(program: &mut Program, words: usize) {
    assert!(words <= MAX_STAGED_WORDS, "cannot stage {words} words");
    if words == 0 {
        return;
    }
    let bytes = words * WORD;
    let len = bytes.min(255);
    let dest = bytes - len;
    let core = Instruction::op(Opcode::CALLDATACOPY);
    program.atoms.push(Atom::guarded(core, 0, &[len as u8, 0, dest as u8]));
}

/// Shape of one storage program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StorageShape {
    /// SSTOREs to fresh slots.
    pub allocations: usize,
    /// SSTOREs overwriting one of the allocated slots with another
    /// non-zero value.
    pub updates: usize,
    /// Cheap arithmetic steps appended as filler.
    pub filler: usize,
}

impl StorageShape {
    /// Memory words staged: one per storage write.
    pub fn memory_words(&self) -> usize {
        self.allocations + self.updates
    }
}

/// A program allocating and updating storage, staging one memory word
/// per write. Slots are random, so distinct programs do not collide.
pub fn storage_program<R: Rng + ?Sized>(shape: StorageShape, rng: &mut R) -> Program {
    assert!(shape.updates == 0 || shape.allocations > 0, "updates need an allocated slot");
    let mut p = Program::default();
    stage_memory(&mut p, shape.memory_words());
    let mut slots = Vec::with_capacity(shape.allocations);
    for _ in 0..shape.allocations {
        push_random(&mut p, rng);
        push_random(&mut p, rng);
        slots.push(p.atoms.last().expect("just pushed").core);
        bare(&mut p, Opcode::SSTORE);
    }
    for _ in 0..shape.updates {
        push_random(&mut p, rng);
        p.atoms.push(Atom::bare(slots[rng.random_range(0..slots.len())]));
        bare(&mut p, Opcode::SSTORE);
    }
    for _ in 0..shape.filler {
        push_random(&mut p, rng);
        push_random(&mut p, rng);
        bare(&mut p, [Opcode::ADD, Opcode::MUL, Opcode::SUB, Opcode::DIV][rng.random_range(0..4)]);
        bare(&mut p, Opcode::POP);
    }
    if p.atoms.is_empty() {
        bare(&mut p, Opcode::MSIZE);
    }
    p
}

/// `n` storage programs with between 0 and 8 allocations, up to
/// `MAX_STAGED_WORDS - 8` updates and up to 40 filler steps.
pub fn storage_workload<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Program> {
    (0..n)
        .map(|_| {
            let allocations = rng.random_range(0..=8);
            let updates = if allocations == 0 { 0 } else { rng.random_range(0..=MAX_STAGED_WORDS - 8) };
            let shape = StorageShape { allocations, updates, filler: rng.random_range(0..=40) };
            storage_program(shape, rng)
        })
        .collect()
}

/// A read-only contract of `reads` SLOADs of distinct random slots,
/// interleaved with `filler` arithmetic steps.
pub fn sload_contract<R: Rng + ?Sized>(reads: usize, filler: usize, rng: &mut R) -> Program {
    let mut p = Program::default();
    let total = reads + filler;
    for i in 0..total {
        // Spreads the reads evenly over the steps.
        if (i + 1) * reads / total > i * reads / total {
            push_random(&mut p, rng);
            bare(&mut p, Opcode::SLOAD);
            bare(&mut p, Opcode::POP);
        } else {
            push_random(&mut p, rng);
            push_random(&mut p, rng);
            bare(&mut p, Opcode::MUL);
            bare(&mut p, Opcode::POP);
        }
    }
    if p.atoms.is_empty() {
        bare(&mut p, Opcode::MSIZE);
    }
    p
}

/// Gas of one SLOAD step in [`sload_contract`]: PUSH32, SLOAD and POP.
pub const SLOAD_STEP_GAS: u64 = 3 + 200 + 2;

/// Storage-heavy contracts of roughly `gas` post-era gas each, with an
/// arithmetic share drawn per contract from `0..=max_filler_percent`.
pub fn storage_heavy_contracts<R: Rng + ?Sized>(
    count: usize,
    gas: u64,
    max_filler_percent: u32,
    rng: &mut R,
) -> Vec<Program> {
    (0..count)
        .map(|_| {
            let reads = (gas / SLOAD_STEP_GAS).max(1) as usize;
            let filler = reads * rng.random_range(0..=max_filler_percent) as usize / 100;
            sload_contract(reads, filler, rng)
        })
        .collect()
}

/// Arithmetic-only contracts of `steps` steps, touching no state.
pub fn compute_contracts<R: Rng + ?Sized>(count: usize, steps: usize, rng: &mut R) -> Vec<Program> {
    (0..count).map(|_| sload_contract(0, steps, rng)).collect()
}

/// `n_blocks` blocks of SLOAD contracts, each block filled with contracts
/// of `contract_gas` until it reaches `block_gas_target`. Slots are
/// fresh, so the working set grows linearly with the block count.
pub fn storage_blocks<R: Rng + ?Sized>(
    n_blocks: usize,
    block_gas_target: u64,
    contract_gas: u64,
    rng: &mut R,
) -> Vec<Vec<Program>> {
    assert!(contract_gas > 0, "contracts must consume gas");
    (0..n_blocks)
        .map(|_| {
            let mut block = Vec::new();
            let mut gas = 0;
            while gas + contract_gas <= block_gas_target {
                block.push(sload_contract((contract_gas / SLOAD_STEP_GAS).max(1) as usize, 0, rng));
                gas += contract_gas;
            }
            block
        })
        .collect()
}

/// Programs mixing the state-reading instructions with arguments that
/// sometimes repeat, so their timings spread between cache hits and
/// misses. BLOCKHASH heights fall inside the lookup window of `ctx`.
pub fn io_variance_corpus<R: Rng + ?Sized>(
    programs: usize,
    steps: usize,
    ctx: &ExecutionContext,
    rng: &mut R,
) -> Vec<Program> {
    let mut keys: Vec<[u8; 32]> = Vec::new();
    let mut key = |rng: &mut R| {
        if !keys.is_empty() && rng.random_bool(0.5) {
            keys[rng.random_range(0..keys.len())]
        } else {
            let mut k = [0u8; 32];
            rng.fill(&mut k[12..]);
            keys.push(k);
            k
        }
    };
    (0..programs)
        .map(|_| {
            let mut p = Program::default();
            // Results stay on the stack; EXTCODECOPY guards consume them.
            let mut depth = 0usize;
            for _ in 0..steps {
                match rng.random_range(0..5) {
                    0 => {
                        let back = rng.random_range(1..=256u64);
                        let height = Word::from(ctx.block_number.saturating_sub(back));
                        p.atoms.push(Atom::bare(Instruction::push_word(height)));
                        bare(&mut p, Opcode::BLOCKHASH);
                        depth += 1;
                    }
                    op @ 1..=3 => {
                        p.atoms.push(Atom::bare(Instruction::push(&key(rng))));
                        bare(&mut p, [Opcode::BALANCE, Opcode::SLOAD, Opcode::EXTCODESIZE][op - 1]);
                        depth += 1;
                    }
                    _ => {
                        let pops = depth.min(4);
                        let pins = [rng.random_range(0..=64u8), 0, 0, rng.random_range(0..=255u8)];
                        p.atoms.push(Atom::guarded(Instruction::op(Opcode::EXTCODECOPY), pops, &pins));
                        depth -= pops;
                    }
                }
                if depth > 64 {
                    bare(&mut p, Opcode::POP);
                    depth -= 1;
                }
            }
            if p.atoms.is_empty() {
                bare(&mut p, Opcode::MSIZE);
            }
            p
        })
        .collect()
}
