//! Programs as sequences of atoms, bytecode codec and static validation.

use std::fmt;

use super::opcode::{instruction_info, Opcode};
use super::{VmError, Word};

/// Largest stack depth a program may reach.
pub const STACK_LIMIT: usize = 1024;

/// One instruction with its (possibly empty) immediate.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    imm: [u8; 32],
}

impl Instruction {
    /// A non-PUSH instruction.
    pub fn op(opcode: Opcode) -> Self {
        debug_assert_eq!(opcode.immediate_len(), 0);
        Instruction { opcode, imm: [0; 32] }
    }

    /// `PUSHn` with the given big-endian immediate; `bytes.len()` selects n.
    pub fn push(bytes: &[u8]) -> Self {
        let opcode = Opcode::push(bytes.len());
        let mut imm = [0; 32];
        imm[..bytes.len()].copy_from_slice(bytes);
        Instruction { opcode, imm }
    }

    pub fn push1(value: u8) -> Self {
        Self::push(&[value])
    }

    /// `PUSHn` of `value` using the smallest width that holds it (at least 1).
    pub fn push_word(value: Word) -> Self {
        let width = value.bits().div_ceil(8).max(1);
        let be = value.to_big_endian();
        Self::push(&be[32 - width..])
    }

    pub fn immediate(&self) -> &[u8] {
        &self.imm[..self.opcode.immediate_len()]
    }

    pub fn immediate_word(&self) -> Word {
        Word::from_big_endian(self.immediate())
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.opcode.immediate_len()
    }

    pub fn is_pop(&self) -> bool {
        self.opcode == Opcode::POP
    }

    pub fn is_push1(&self) -> bool {
        self.opcode == Opcode::PUSH1
    }
}

impl fmt::Debug for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.opcode.mnemonic())?;
        if self.opcode.immediate_len() > 0 {
            write!(f, " 0x{}", hex::encode(self.immediate()))?;
        }
        Ok(())
    }
}

/// A core instruction plus the POP/PUSH1 run that pins its memory arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub guards: Vec<Instruction>,
    pub core: Instruction,
}

impl Atom {
    pub fn bare(core: Instruction) -> Self {
        Atom { guards: Vec::new(), core }
    }

    /// A memory-using core with `pops` POPs followed by one PUSH1 per guard
    /// slot, taking values from `pins` (top of stack last).
    pub fn guarded(core: Instruction, pops: usize, pins: &[u8]) -> Self {
        let guards = std::iter::repeat_n(Instruction::op(Opcode::POP), pops)
            .chain(pins.iter().map(|&v| Instruction::push1(v)))
            .collect();
        Atom { guards, core }
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> + '_ {
        self.guards.iter().chain(std::iter::once(&self.core))
    }

    pub fn len(&self) -> usize {
        self.guards.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Net stack effect of the whole atom.
    pub fn stack_delta(&self) -> isize {
        self.instructions().map(|i| i.opcode.meta().stack_delta()).sum()
    }

    /// Minimum stack depth required before the atom starts.
    pub fn required_depth(&self) -> usize {
        let mut depth: isize = 0;
        let mut lowest: isize = 0;
        for ins in self.instructions() {
            let info = ins.opcode.meta();
            lowest = lowest.min(depth - info.arity_in as isize);
            depth += info.stack_delta();
        }
        (-lowest) as usize
    }

    /// Largest depth reached relative to the starting depth.
    pub fn peak_rise(&self) -> isize {
        let mut depth: isize = 0;
        let mut peak: isize = 0;
        for ins in self.instructions() {
            depth += ins.opcode.meta().stack_delta();
            peak = peak.max(depth);
        }
        peak
    }

    fn is_bare(&self, opcode: Opcode) -> bool {
        self.guards.is_empty() && self.core.opcode == opcode
    }
}

/// A loop-free program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub atoms: Vec<Atom>,
}

impl Program {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Program { atoms }
    }

    /// Each instruction becomes its own atom; memory users pick up their
    /// guards by the same grouping rule the decoder uses.
    pub fn from_instructions(instructions: impl IntoIterator<Item = Instruction>) -> Self {
        Program { atoms: group_atoms(instructions.into_iter()) }
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> + '_ {
        self.atoms.iter().flat_map(Atom::instructions)
    }

    pub fn instruction_count(&self) -> usize {
        self.atoms.iter().map(Atom::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.instruction_count() * 2);
        for ins in self.instructions() {
            out.push(ins.opcode.0);
            out.extend_from_slice(ins.immediate());
        }
        out
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    /// Parses bytecode and rejects anything that fails static validation.
    pub fn decode(bytes: &[u8]) -> Result<Program, VmError> {
        let program = Program { atoms: group_atoms(parse_instructions(bytes)?.into_iter()) };
        let report = program.validate();
        match report.violation {
            None => Ok(program),
            Some(violation) => Err(VmError::StackUnsafe(violation)),
        }
    }

    /// Accepts hex text with an optional `0x` prefix; surrounding whitespace is ignored.
    pub fn from_hex(text: &str) -> Result<Program, VmError> {
        let trimmed = text.trim();
        let digits = trimmed.strip_prefix("0x").or_else(|| trimmed.strip_prefix("0X")).unwrap_or(trimmed);
        let bytes = hex::decode(digits).map_err(|e| VmError::BadHex(e.to_string()))?;
        Program::decode(&bytes)
    }

    pub fn validate(&self) -> ValidationReport {
        static_validate(self)
    }

    /// Simulated stack depth before each atom, plus the final depth.
    /// Only meaningful for programs that validate.
    pub fn atom_depths(&self) -> Vec<usize> {
        let mut depths = Vec::with_capacity(self.atoms.len() + 1);
        let mut depth: isize = 0;
        depths.push(0);
        for atom in &self.atoms {
            depth += atom.stack_delta();
            depths.push(depth.max(0) as usize);
        }
        depths
    }

    /// Positions of atoms (not guards) whose core is a real opcode choice.
    pub fn core_count(&self) -> usize {
        self.atoms.len()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in self.instructions() {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

fn parse_instructions(bytes: &[u8]) -> Result<Vec<Instruction>, VmError> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < bytes.len() {
        let byte = bytes[pc];
        instruction_info(byte).map_err(|_| VmError::UnknownOpcode { opcode: byte, offset: Some(pc) })?;
        let opcode = Opcode(byte);
        let width = opcode.immediate_len();
        let ins = if width > 0 {
            let end = pc + 1 + width;
            if end > bytes.len() {
                return Err(VmError::TruncatedImmediate { offset: pc, opcode: byte });
            }
            Instruction::push(&bytes[pc + 1..end])
        } else {
            Instruction::op(opcode)
        };
        out.push(ins);
        pc += 1 + width;
    }
    Ok(out)
}

/// Groups each memory-using core with the guard run in front of it: the
/// `k` PUSH1s directly before it (k = guard width) and up to `k` POPs before
/// those.
fn group_atoms(instructions: impl Iterator<Item = Instruction>) -> Vec<Atom> {
    let mut atoms: Vec<Atom> = Vec::new();
    for ins in instructions {
        let width = if ins.opcode.meta().uses_memory { ins.opcode.guard_width() } else { 0 };
        let tail_push1 = atoms.iter().rev().take(width).take_while(|a| a.is_bare(Opcode::PUSH1)).count();
        if width == 0 || tail_push1 < width {
            atoms.push(Atom::bare(ins));
            continue;
        }
        let pushes = atoms.split_off(atoms.len() - width);
        let pops_available = atoms.iter().rev().take(width).take_while(|a| a.is_bare(Opcode::POP)).count();
        let pops = atoms.split_off(atoms.len() - pops_available);
        let guards = pops.into_iter().chain(pushes).map(|a| a.core).collect();
        atoms.push(Atom { guards, core: ins });
    }
    atoms
}

/// What made a program fail validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    StackUnderflow {
        needed: usize,
        available: usize,
    },
    StackOverflow {
        depth: usize,
    },
    /// A memory-using core without a guard run pinning its address arguments.
    UnpinnedMemoryArgument,
    /// Guards must be `POP^j PUSH1^k` (j <= k, k the guard width) on a memory user, and absent otherwise.
    MalformedGuard,
    /// A short guard run right after a bare POP would re-group differently when decoded.
    AmbiguousGuard,
    UnsupportedOpcode(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    /// Index into the flattened instruction stream.
    pub position: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at instruction {}", self.kind, self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub ok: bool,
    /// Depth before each flattened instruction plus the final depth; stops at
    /// the first violation.
    pub depths: Vec<usize>,
    pub max_depth: usize,
    pub violation: Option<Violation>,
}

pub fn static_validate(program: &Program) -> ValidationReport {
    let mut depths = Vec::with_capacity(program.instruction_count() + 1);
    let mut depth = 0usize;
    let mut max_depth = 0usize;
    let mut position = 0usize;
    depths.push(0);
    let fail = |depths: Vec<usize>, max_depth, position, kind| ValidationReport {
        ok: false,
        depths,
        max_depth,
        violation: Some(Violation { position, kind }),
    };
    for (idx, atom) in program.atoms.iter().enumerate() {
        if let Some(kind) = check_guards(atom, idx.checked_sub(1).map(|i| &program.atoms[i])) {
            return fail(depths, max_depth, position, kind);
        }
        for ins in atom.instructions() {
            let Ok(info) = instruction_info(ins.opcode.0) else {
                return fail(depths, max_depth, position, ViolationKind::UnsupportedOpcode(ins.opcode.0));
            };
            if depth < info.arity_in {
                let kind = ViolationKind::StackUnderflow { needed: info.arity_in, available: depth };
                return fail(depths, max_depth, position, kind);
            }
            depth = depth - info.arity_in + info.arity_out;
            if depth > STACK_LIMIT {
                return fail(depths, max_depth, position, ViolationKind::StackOverflow { depth });
            }
            max_depth = max_depth.max(depth);
            depths.push(depth);
            position += 1;
        }
    }
    ValidationReport { ok: true, depths, max_depth, violation: None }
}

fn check_guards(atom: &Atom, previous: Option<&Atom>) -> Option<ViolationKind> {
    if !atom.core.opcode.is_supported() {
        return Some(ViolationKind::UnsupportedOpcode(atom.core.opcode.0));
    }
    let info = atom.core.opcode.meta();
    if !info.uses_memory {
        return (!atom.guards.is_empty()).then_some(ViolationKind::MalformedGuard);
    }
    let width = atom.core.opcode.guard_width();
    let pops = atom.guards.iter().take_while(|g| g.is_pop()).count();
    let pushes = atom.guards[pops..].iter().take_while(|g| g.is_push1()).count();
    if pops + pushes != atom.guards.len() {
        return Some(ViolationKind::MalformedGuard);
    }
    if pushes < width {
        return Some(ViolationKind::UnpinnedMemoryArgument);
    }
    if pushes > width || pops > width {
        return Some(ViolationKind::MalformedGuard);
    }
    if pops < width && previous.is_some_and(|p| p.is_bare(Opcode::POP)) {
        return Some(ViolationKind::AmbiguousGuard);
    }
    None
}
