//! Metered execution of validated programs.

use std::collections::HashMap;
use std::io::Write;
use std::sync::LazyLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gas::{Gas, GasSchedule};
use super::host::{address_to_word, word_to_address, Address, StateAccess};
use super::opcode::Opcode;
use super::program::{Instruction, Program};
use super::{VmError, Word};

/// How elapsed time is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Monotonic wall clock, nanosecond resolution.
    Wall,
    /// Sum of the step and IO cost models; fully deterministic.
    #[default]
    Simulated,
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wall" => Ok(ClockMode::Wall),
            "simulated" | "sim" => Ok(ClockMode::Simulated),
            other => Err(format!("unknown clock `{other}` (expected wall or simulated)")),
        }
    }
}

impl std::fmt::Display for ClockMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClockMode::Wall => "wall",
            ClockMode::Simulated => "simulated",
        })
    }
}

/// Simulated compute time per opcode, in nanoseconds, excluding state IO.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "StepCostParts", into = "StepCostParts")]
pub struct StepCosts {
    pub default_ns: u64,
    pub overrides: Vec<(u8, u64)>,
    table: Option<Box<[u64; 256]>>,
}

#[derive(Serialize, Deserialize)]
struct StepCostParts {
    default_ns: u64,
    overrides: Vec<(u8, u64)>,
}

impl From<StepCostParts> for StepCosts {
    fn from(p: StepCostParts) -> Self {
        StepCosts::from_parts(p.default_ns, p.overrides)
    }
}

impl From<StepCosts> for StepCostParts {
    fn from(c: StepCosts) -> Self {
        StepCostParts { default_ns: c.default_ns, overrides: c.overrides }
    }
}

impl PartialEq for StepCosts {
    fn eq(&self, other: &Self) -> bool {
        (0..=255u8).all(|b| self.cost(Opcode(b)) == other.cost(Opcode(b)))
    }
}

impl Eq for StepCosts {}

impl StepCosts {
    pub fn uniform(ns: u64) -> Self {
        StepCosts::from_parts(ns, Vec::new())
    }

    pub fn from_parts(default_ns: u64, overrides: Vec<(u8, u64)>) -> Self {
        let mut costs = StepCosts { default_ns, overrides, table: None };
        costs.rebuild();
        costs
    }

    pub fn with(mut self, opcode: Opcode, ns: u64) -> Self {
        self.overrides.retain(|(op, _)| *op != opcode.0);
        self.overrides.push((opcode.0, ns));
        self.rebuild();
        self
    }

    fn rebuild(&mut self) {
        let mut table = Box::new([self.default_ns; 256]);
        for &(op, ns) in &self.overrides {
            table[op as usize] = ns;
        }
        self.table = Some(table);
    }

    pub fn cost(&self, opcode: Opcode) -> u64 {
        match &self.table {
            Some(t) => t[opcode.0 as usize],
            None => self.overrides.iter().rev().find(|(op, _)| *op == opcode.0).map_or(self.default_ns, |(_, ns)| *ns),
        }
    }
}

impl Default for StepCosts {
    /// Arithmetic costs follow the relative speeds measured on a production
    /// interpreter; everything else runs at the generic step cost.
    fn default() -> Self {
        StepCosts::from_parts(80, Vec::new())
            .with(Opcode::ADD, 82)
            .with(Opcode::SUB, 82)
            .with(Opcode::MUL, 97)
            .with(Opcode::DIV, 476)
            .with(Opcode::MOD, 476)
            .with(Opcode::EXP, 288)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionContext {
    pub self_address: Address,
    pub caller: Address,
    pub calldata: Vec<u8>,
    pub block_number: u64,
    pub gas_limit: Gas,
}

impl Default for ExecutionContext {
    fn default() -> Self {
        ExecutionContext {
            self_address: Address::from_low_u64_be(0xc0ffee),
            caller: Address::from_low_u64_be(0xca11e7),
            calldata: (0u8..=255).collect(),
            block_number: 5_587_480,
            gas_limit: 10_000_000,
        }
    }
}

impl ExecutionContext {
    pub fn with_gas_limit(mut self, gas_limit: Gas) -> Self {
        self.gas_limit = gas_limit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Stop,
    EndOfProgram,
    OutOfGas,
}

/// Resource usage of one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionMeasurement {
    /// Metered gas, before refunds, excluding the base transaction cost.
    pub gas_used: Gas,
    pub refund: Gas,
    pub elapsed_ns: u64,
    pub clock: ClockMode,
    pub mem_allocated: u64,
    pub mem_freed: u64,
    pub mem_delta: i64,
    pub storage_words_allocated: u64,
    pub storage_words_freed: u64,
    pub io_reads: u64,
    pub io_cache_hits: u64,
    pub steps: u64,
    pub halt: HaltReason,
}

impl ExecutionMeasurement {
    /// Gas after refunds, which are capped at half the metered amount.
    pub fn net_gas(&self) -> Gas {
        self.gas_used - self.refund.min(self.gas_used / 2)
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.elapsed_ns as f64 * 1e-9
    }
}

/// One executed instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceStep {
    /// Byte offset of the instruction.
    pub pc: usize,
    pub opcode: Opcode,
    /// Gas remaining before the step.
    pub gas_before: Gas,
    pub gas_cost: Gas,
    /// Stack depth before the step.
    pub stack_depth: usize,
    /// Active memory words after the step.
    pub mem_words: u64,
    pub time_ns: u64,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub measurement: ExecutionMeasurement,
    pub trace: Vec<TraceStep>,
    pub stack: Vec<Word>,
    pub memory: Vec<u8>,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceStep], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pc", "opcode", "gas_before", "gas_cost", "stack_depth", "mem_words"])?;
    for step in trace {
        w.write_record([
            step.pc.to_string(),
            step.opcode.mnemonic().to_string(),
            step.gas_before.to_string(),
            step.gas_cost.to_string(),
            step.stack_depth.to_string(),
            step.mem_words.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean cost of reading the wall clock twice, removed from per-step readings.
static TIMER_OVERHEAD_NS: LazyLock<u64> = LazyLock::new(|| {
    const ROUNDS: u32 = 2000;
    let mut total = 0u128;
    for _ in 0..ROUNDS {
        let a = Instant::now();
        let b = Instant::now();
        total += (b - a).as_nanos();
    }
    (total / ROUNDS as u128) as u64
});

pub fn timer_overhead_ns() -> u64 {
    *TIMER_OVERHEAD_NS
}

/// Memory sizes beyond this many words are never affordable.
const MAX_MEMORY_WORDS: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vm {
    pub schedule: GasSchedule,
    pub clock: ClockMode,
    pub step_costs: StepCosts,
    /// Record a per-step trace.
    pub trace: bool,
}

impl Default for Vm {
    fn default() -> Self {
        Vm::new(GasSchedule::default(), ClockMode::Simulated)
    }
}

impl Vm {
    pub fn new(schedule: GasSchedule, clock: ClockMode) -> Self {
        Vm { schedule, clock, step_costs: StepCosts::default(), trace: false }
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_step_costs(mut self, costs: StepCosts) -> Self {
        self.step_costs = costs;
        self
    }

    /// Runs `program` to completion, STOP or exhaustion of the gas limit.
    ///
    /// `OutOfGas` is reported through [`ExecutionMeasurement::halt`] with
    /// `gas_used == gas_limit`; storage writes of the failed execution are
    /// rolled back.
    pub fn execute<S: StateAccess + ?Sized>(
        &self,
        program: &Program,
        ctx: &ExecutionContext,
        state: &mut S,
    ) -> Result<Execution, VmError> {
        let report = program.validate();
        if let Some(v) = report.violation {
            return Err(VmError::StackUnsafe(v));
        }
        let mut machine = Machine::new(self, ctx);
        let started = Instant::now();
        let halt = machine.run(program, state)?;
        let wall_ns = started.elapsed().as_nanos() as u64;
        machine.finish(halt, wall_ns, state)
    }
}

struct Machine<'a> {
    vm: &'a Vm,
    ctx: &'a ExecutionContext,
    stack: Vec<Word>,
    memory: Vec<u8>,
    gas_used: Gas,
    refund: Gas,
    sim_ns: u64,
    io_reads: u64,
    io_hits: u64,
    steps: u64,
    /// Slot -> value before the first write in this execution.
    originals: HashMap<Word, Word>,
    written: HashMap<Word, Word>,
    trace: Vec<TraceStep>,
}

impl<'a> Machine<'a> {
    fn new(vm: &'a Vm, ctx: &'a ExecutionContext) -> Self {
        Machine {
            vm,
            ctx,
            stack: Vec::with_capacity(64),
            memory: Vec::new(),
            gas_used: 0,
            refund: 0,
            sim_ns: 0,
            io_reads: 0,
            io_hits: 0,
            steps: 0,
            originals: HashMap::new(),
            written: HashMap::new(),
            trace: Vec::new(),
        }
    }

    fn mem_words(&self) -> u64 {
        (self.memory.len() / 32) as u64
    }

    fn run<S: StateAccess + ?Sized>(&mut self, program: &Program, state: &mut S) -> Result<HaltReason, VmError> {
        let overhead = match self.vm.clock {
            ClockMode::Wall if self.vm.trace => timer_overhead_ns(),
            _ => 0,
        };
        let mut pc = 0usize;
        for (position, ins) in program.instructions().enumerate() {
            let gas_before = self.ctx.gas_limit - self.gas_used;
            let depth = self.stack.len();
            let t0 = (self.vm.clock == ClockMode::Wall && self.vm.trace).then(Instant::now);
            let sim_before = self.sim_ns;
            let outcome = self.step(ins, position, state)?;
            let time_ns = match t0 {
                Some(t0) => (t0.elapsed().as_nanos() as u64).saturating_sub(overhead),
                None => self.sim_ns - sim_before,
            };
            let Some(cost) = outcome else {
                return Ok(HaltReason::OutOfGas);
            };
            self.steps += 1;
            if self.vm.trace {
                self.trace.push(TraceStep {
                    pc,
                    opcode: ins.opcode,
                    gas_before,
                    gas_cost: cost,
                    stack_depth: depth,
                    mem_words: self.mem_words(),
                    time_ns,
                });
            }
            pc += ins.encoded_len();
            if ins.opcode == Opcode::STOP {
                return Ok(HaltReason::Stop);
            }
        }
        Ok(HaltReason::EndOfProgram)
    }

    fn arg(&self, i: usize) -> Word {
        self.stack[self.stack.len() - 1 - i]
    }

    /// Returns the gas charged, or `None` when the step ran out of gas.
    fn charge(&mut self, cost: Gas) -> Option<Gas> {
        let remaining = self.ctx.gas_limit - self.gas_used;
        if cost > remaining {
            self.gas_used = self.ctx.gas_limit;
            None
        } else {
            self.gas_used += cost;
            Some(cost)
        }
    }

    /// Words of memory needed to touch `len` bytes at `offset`, or `None`
    /// when the range is too large to ever be paid for.
    fn words_needed(&self, offset: Word, len: u64) -> Option<u64> {
        if len == 0 {
            return Some(self.mem_words());
        }
        if offset.bits() > 40 {
            return None;
        }
        let end = offset.low_u64() + len;
        let words = end.div_ceil(32);
        (words <= MAX_MEMORY_WORDS).then_some(words.max(self.mem_words()))
    }

    fn expansion_cost(&self, needed: Option<u64>) -> Gas {
        match needed {
            Some(words) => self.vm.schedule.memory_expansion_cost(self.mem_words(), words),
            None => Gas::MAX,
        }
    }

    fn grow_to(&mut self, words: u64) {
        let bytes = (words * 32) as usize;
        if bytes > self.memory.len() {
            self.memory.resize(bytes, 0);
        }
    }

    fn record_io(&mut self, layer: super::host::Layer, cost_ns: u64) {
        if layer != super::host::Layer::None {
            self.io_reads += 1;
            if layer.is_cache_hit() {
                self.io_hits += 1;
            }
        }
        self.sim_ns += cost_ns;
    }

    fn step<S: StateAccess + ?Sized>(
        &mut self,
        ins: &Instruction,
        position: usize,
        state: &mut S,
    ) -> Result<Option<Gas>, VmError> {
        let op = ins.opcode;
        let info = op.meta();
        if self.stack.len() < info.arity_in {
            return Err(VmError::InternalFault { position, detail: format!("stack underflow executing {op}") });
        }
        self.sim_ns += self.vm.step_costs.cost(op);
        let schedule = &self.vm.schedule;
        let addr = self.ctx.self_address;

        // Memory-touching ops: (offset, len) of the touched range.
        let mem_range = match op {
            Opcode::MLOAD | Opcode::MSTORE => Some((self.arg(0), 32u64)),
            Opcode::MSTORE8 => Some((self.arg(0), 1)),
            Opcode::CALLDATACOPY => Some((self.arg(0), clamp_len(self.arg(2)))),
            Opcode::EXTCODECOPY => Some((self.arg(1), clamp_len(self.arg(3)))),
            _ => None,
        };
        let needed = mem_range.map(|(off, len)| self.words_needed(off, len));
        let expansion = needed.map_or(0, |n| self.expansion_cost(n));

        let mut sstore_current = None;
        if op == Opcode::SSTORE {
            let access = state.storage_read(addr, self.arg(0))?;
            self.record_io(access.layer, access.cost_ns);
            sstore_current = Some(access.value);
        }
        let base = schedule.gas_for(op, &self.stack, sstore_current);
        let Some(cost) = self.charge(base.saturating_add(expansion)) else {
            return Ok(None);
        };
        if let Some(Some(words)) = needed {
            self.grow_to(words);
        }

        match op {
            Opcode::STOP => {}
            Opcode::ADD => self.binary(|a, b| a.overflowing_add(b).0),
            Opcode::MUL => self.binary(|a, b| a.overflowing_mul(b).0),
            Opcode::SUB => self.binary(|a, b| a.overflowing_sub(b).0),
            Opcode::DIV => self.binary(|a, b| if b.is_zero() { Word::zero() } else { a / b }),
            Opcode::MOD => self.binary(|a, b| if b.is_zero() { Word::zero() } else { a % b }),
            Opcode::EXP => self.binary(|a, b| a.overflowing_pow(b).0),
            Opcode::ADDRESS => self.stack.push(address_to_word(self.ctx.self_address)),
            Opcode::CALLER => self.stack.push(address_to_word(self.ctx.caller)),
            Opcode::BALANCE | Opcode::EXTCODESIZE => {
                let target = word_to_address(self.stack.pop().unwrap());
                let access = state.account(target)?;
                self.record_io(access.layer, access.cost_ns);
                self.stack.push(if op == Opcode::BALANCE {
                    access.value.balance
                } else {
                    Word::from(access.value.code_size)
                });
            }
            Opcode::EXTCODECOPY => {
                let target = word_to_address(self.stack.pop().unwrap());
                let dest = self.stack.pop().unwrap();
                let offset = self.stack.pop().unwrap();
                let len = clamp_len(self.stack.pop().unwrap());
                let access = state.account(target)?;
                self.record_io(access.layer, access.cost_ns);
                if len > 0 {
                    let code_off = if offset.bits() > 64 { u64::MAX } else { offset.low_u64() };
                    let bytes = access.value.code_slice(code_off, len as usize);
                    let start = dest.low_u64() as usize;
                    self.memory[start..start + bytes.len()].copy_from_slice(&bytes);
                }
            }
            Opcode::BLOCKHASH => {
                let height = self.stack.pop().unwrap();
                let access = state.block_hash(height, self.ctx.block_number)?;
                self.record_io(access.layer, access.cost_ns);
                self.stack.push(access.value);
            }
            Opcode::CALLDATALOAD => {
                let offset = self.stack.pop().unwrap();
                let mut buf = [0u8; 32];
                if offset.bits() <= 64 {
                    copy_padded(&self.ctx.calldata, offset.low_u64(), &mut buf);
                }
                self.stack.push(Word::from_big_endian(&buf));
            }
            Opcode::CALLDATACOPY => {
                let dest = self.stack.pop().unwrap();
                let offset = self.stack.pop().unwrap();
                let len = clamp_len(self.stack.pop().unwrap()) as usize;
                if len > 0 {
                    let start = dest.low_u64() as usize;
                    let src = if offset.bits() > 64 { u64::MAX } else { offset.low_u64() };
                    let mut buf = vec![0u8; len];
                    copy_padded(&self.ctx.calldata, src, &mut buf);
                    self.memory[start..start + len].copy_from_slice(&buf);
                }
            }
            Opcode::POP => {
                self.stack.pop();
            }
            Opcode::MLOAD => {
                let start = self.stack.pop().unwrap().low_u64() as usize;
                let value = Word::from_big_endian(&self.memory[start..start + 32]);
                self.stack.push(value);
            }
            Opcode::MSTORE => {
                let start = self.stack.pop().unwrap().low_u64() as usize;
                let value = self.stack.pop().unwrap();
                self.memory[start..start + 32].copy_from_slice(&value.to_big_endian());
            }
            Opcode::MSTORE8 => {
                let start = self.stack.pop().unwrap().low_u64() as usize;
                let value = self.stack.pop().unwrap();
                self.memory[start] = value.low_u64() as u8;
            }
            Opcode::SLOAD => {
                let slot = self.stack.pop().unwrap();
                let access = state.storage_read(addr, slot)?;
                self.record_io(access.layer, access.cost_ns);
                self.stack.push(access.value);
            }
            Opcode::SSTORE => {
                let slot = self.stack.pop().unwrap();
                let value = self.stack.pop().unwrap();
                let old = sstore_current.unwrap_or_default();
                self.refund += schedule.sstore_refund_for(old, value);
                let access = state.storage_write(addr, slot, value)?;
                self.sim_ns += access.cost_ns;
                self.originals.entry(slot).or_insert(old);
                self.written.insert(slot, value);
            }
            Opcode::MSIZE => self.stack.push(Word::from(self.memory.len() as u64)),
            op if op.immediate_len() > 0 => self.stack.push(ins.immediate_word()),
            op if (Opcode::DUP1..=Opcode::DUP16).contains(&op) => {
                let n = (op.0 - Opcode::DUP1.0 + 1) as usize;
                let value = self.arg(n - 1);
                self.stack.push(value);
            }
            op if (Opcode::SWAP1..=Opcode::SWAP16).contains(&op) => {
                let n = (op.0 - Opcode::SWAP1.0 + 1) as usize;
                let top = self.stack.len() - 1;
                self.stack.swap(top, top - n);
            }
            op => return Err(VmError::InternalFault { position, detail: format!("no semantics for {op:?}") }),
        }
        if self.stack.len() > super::program::STACK_LIMIT {
            return Err(VmError::InternalFault { position, detail: "stack overflow".into() });
        }
        Ok(Some(cost))
    }

    fn binary(&mut self, f: impl FnOnce(Word, Word) -> Word) {
        let a = self.stack.pop().unwrap();
        let b = self.stack.pop().unwrap();
        self.stack.push(f(a, b));
    }

    fn finish<S: StateAccess + ?Sized>(
        mut self,
        halt: HaltReason,
        wall_ns: u64,
        state: &mut S,
    ) -> Result<Execution, VmError> {
        let addr = self.ctx.self_address;
        let (mut allocated, mut freed) = (0u64, 0u64);
        if halt == HaltReason::OutOfGas {
            let mut originals: Vec<_> = self.originals.iter().map(|(k, v)| (*k, *v)).collect();
            originals.sort();
            for (slot, value) in originals {
                // Roll-back writes are not part of the metered work.
                state.storage_write(addr, slot, value)?;
            }
            self.refund = 0;
        } else {
            for (slot, orig) in &self.originals {
                let now = self.written[slot];
                match (orig.is_zero(), now.is_zero()) {
                    (true, false) => allocated += 1,
                    (false, true) => freed += 1,
                    _ => {}
                }
            }
        }
        let mem_allocated = self.mem_words() * 32 + allocated * 32;
        let mem_freed = freed * 32;
        let elapsed_ns = match self.vm.clock {
            ClockMode::Wall => wall_ns,
            ClockMode::Simulated => self.sim_ns,
        };
        let measurement = ExecutionMeasurement {
            gas_used: self.gas_used,
            refund: self.refund,
            elapsed_ns,
            clock: self.vm.clock,
            mem_allocated,
            mem_freed,
            mem_delta: mem_allocated as i64 - mem_freed as i64,
            storage_words_allocated: allocated,
            storage_words_freed: freed,
            io_reads: self.io_reads,
            io_cache_hits: self.io_hits,
            steps: self.steps,
            halt,
        };
        Ok(Execution { measurement, trace: self.trace, stack: self.stack, memory: self.memory })
    }
}

/// Copy lengths beyond 2^32 bytes can never be paid for; clamp so the
/// memory check rejects them.
fn clamp_len(len: Word) -> u64 {
    if len.bits() > 32 {
        u32::MAX as u64 + 1
    } else {
        len.low_u64()
    }
}

fn copy_padded(src: &[u8], offset: u64, dst: &mut [u8]) {
    for (i, byte) in dst.iter_mut().enumerate() {
        *byte = offset.checked_add(i as u64).and_then(|at| src.get(at as usize)).copied().unwrap_or(0);
    }
}
