//! Loop-free EVM-subset stack machine with exact gas accounting.

pub mod gas;
pub mod host;
pub mod interpreter;
pub mod opcode;
pub mod program;

pub use gas::{total_transaction_gas, Era, Gas, GasSchedule, Repricing};
pub use host::{Access, Account, Address, Layer, StateAccess, StateError};
pub use interpreter::{
    write_trace_csv, ClockMode, Execution, ExecutionContext, ExecutionMeasurement, HaltReason, StepCosts, TraceStep, Vm,
};
pub use opcode::{instruction_info, supported_opcodes, Opcode, OpcodeInfo, Tier};
pub use program::{
    static_validate, Atom, Instruction, Program, ValidationReport, Violation, ViolationKind, STACK_LIMIT,
};

/// 256-bit machine word; arithmetic wraps modulo 2^256.
pub type Word = primitive_types::U256;

#[derive(Debug, thiserror::Error)]
pub enum VmError {
    #[error("unknown opcode 0x{opcode:02x}{}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    UnknownOpcode { opcode: u8, offset: Option<usize> },
    #[error("PUSH 0x{opcode:02x} at byte {offset} runs past the end of the code")]
    TruncatedImmediate { offset: usize, opcode: u8 },
    #[error("program is not stack safe: {0}")]
    StackUnsafe(Violation),
    #[error("invalid hex: {0}")]
    BadHex(String),
    /// Execution reached a state static validation should have excluded.
    #[error("internal fault at instruction {position}: {detail}")]
    InternalFault { position: usize, detail: String },
    #[error(transparent)]
    State(#[from] StateError),
}
