//! Opcode numbering and static metadata for the supported EVM subset.

use std::fmt;
use std::sync::LazyLock;

use super::VmError;

/// Static gas tier of an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Zero,
    Base,
    VeryLow,
    Low,
    High,
    Special,
}

/// A raw opcode byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Opcode(pub u8);

impl Opcode {
    pub const STOP: Opcode = Opcode(0x00);
    pub const ADD: Opcode = Opcode(0x01);
    pub const MUL: Opcode = Opcode(0x02);
    pub const SUB: Opcode = Opcode(0x03);
    pub const DIV: Opcode = Opcode(0x04);
    pub const MOD: Opcode = Opcode(0x06);
    pub const EXP: Opcode = Opcode(0x0a);
    pub const ADDRESS: Opcode = Opcode(0x30);
    pub const BALANCE: Opcode = Opcode(0x31);
    pub const CALLER: Opcode = Opcode(0x33);
    pub const CALLDATALOAD: Opcode = Opcode(0x35);
    pub const CALLDATACOPY: Opcode = Opcode(0x37);
    pub const EXTCODESIZE: Opcode = Opcode(0x3b);
    pub const EXTCODECOPY: Opcode = Opcode(0x3c);
    pub const BLOCKHASH: Opcode = Opcode(0x40);
    pub const POP: Opcode = Opcode(0x50);
    pub const MLOAD: Opcode = Opcode(0x51);
    pub const MSTORE: Opcode = Opcode(0x52);
    pub const MSTORE8: Opcode = Opcode(0x53);
    pub const SLOAD: Opcode = Opcode(0x54);
    pub const SSTORE: Opcode = Opcode(0x55);
    pub const MSIZE: Opcode = Opcode(0x59);
    pub const PUSH1: Opcode = Opcode(0x60);
    pub const PUSH32: Opcode = Opcode(0x7f);
    pub const DUP1: Opcode = Opcode(0x80);
    pub const DUP16: Opcode = Opcode(0x8f);
    pub const SWAP1: Opcode = Opcode(0x90);
    pub const SWAP16: Opcode = Opcode(0x9f);
    /// Only present in the gas schedule; it is not executable here.
    pub const SUICIDE: Opcode = Opcode(0xff);

    /// `PUSHn` for `n` in `1..=32`.
    pub fn push(n: usize) -> Opcode {
        assert!((1..=32).contains(&n), "PUSH width out of range: {n}");
        Opcode(0x5f + n as u8)
    }

    /// `DUPn` for `n` in `1..=16`.
    pub fn dup(n: usize) -> Opcode {
        assert!((1..=16).contains(&n), "DUP index out of range: {n}");
        Opcode(0x7f + n as u8)
    }

    /// `SWAPn` for `n` in `1..=16`.
    pub fn swap(n: usize) -> Opcode {
        assert!((1..=16).contains(&n), "SWAP index out of range: {n}");
        Opcode(0x8f + n as u8)
    }

    /// Number of immediate bytes following this opcode (non-zero only for PUSH).
    pub fn immediate_len(self) -> usize {
        if (Self::PUSH1.0..=Self::PUSH32.0).contains(&self.0) {
            (self.0 - Self::PUSH1.0 + 1) as usize
        } else {
            0
        }
    }

    pub fn is_supported(self) -> bool {
        OPCODE_TABLE[self.0 as usize].is_some()
    }

    pub fn info(self) -> Result<&'static OpcodeInfo, VmError> {
        instruction_info(self.0)
    }

    /// Metadata for an opcode already known to be in the subset.
    pub(crate) fn meta(self) -> &'static OpcodeInfo {
        OPCODE_TABLE[self.0 as usize].as_ref().expect("opcode outside the supported subset")
    }

    pub fn mnemonic(self) -> &'static str {
        match OPCODE_TABLE[self.0 as usize].as_ref() {
            Some(info) => info.mnemonic,
            None if self == Self::SUICIDE => "SUICIDE",
            None => "INVALID",
        }
    }

    /// Stack positions (0 = top) whose values address memory.
    pub fn memory_args(self) -> &'static [usize] {
        self.meta().memory_arg_positions
    }

    /// Number of topmost stack slots a guard run must pop and re-push to pin
    /// every memory-addressing argument.
    pub fn guard_width(self) -> usize {
        self.meta().memory_arg_positions.iter().max().map_or(0, |p| p + 1)
    }
}

impl fmt::Debug for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(0x{:02x})", self.mnemonic(), self.0)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeInfo {
    pub opcode: Opcode,
    pub mnemonic: &'static str,
    /// Elements consumed from the stack.
    pub arity_in: usize,
    /// Elements left on the stack afterwards (counting untouched ones for DUP/SWAP).
    pub arity_out: usize,
    pub uses_memory: bool,
    pub memory_arg_positions: &'static [usize],
    pub tier: Tier,
}

impl OpcodeInfo {
    /// Net stack effect `r - a`.
    pub fn stack_delta(&self) -> isize {
        self.arity_out as isize - self.arity_in as isize
    }
}

const PUSH_NAMES: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10", "PUSH11", "PUSH12",
    "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23",
    "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
const DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11", "DUP12", "DUP13",
    "DUP14", "DUP15", "DUP16",
];
const SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10", "SWAP11", "SWAP12",
    "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];

static OPCODE_TABLE: LazyLock<Vec<Option<OpcodeInfo>>> = LazyLock::new(build_table);

fn build_table() -> Vec<Option<OpcodeInfo>> {
    let mut table: Vec<Option<OpcodeInfo>> = vec![None; 256];
    let mut put = |op: Opcode, mnemonic, a, r, mem: &'static [usize], tier| {
        table[op.0 as usize] = Some(OpcodeInfo {
            opcode: op,
            mnemonic,
            arity_in: a,
            arity_out: r,
            uses_memory: !mem.is_empty(),
            memory_arg_positions: mem,
            tier,
        });
    };
    use Tier::*;
    put(Opcode::STOP, "STOP", 0, 0, &[], Zero);
    put(Opcode::ADD, "ADD", 2, 1, &[], VeryLow);
    put(Opcode::MUL, "MUL", 2, 1, &[], Low);
    put(Opcode::SUB, "SUB", 2, 1, &[], VeryLow);
    put(Opcode::DIV, "DIV", 2, 1, &[], Low);
    put(Opcode::MOD, "MOD", 2, 1, &[], Low);
    put(Opcode::EXP, "EXP", 2, 1, &[], Special);
    put(Opcode::ADDRESS, "ADDRESS", 0, 1, &[], Base);
    put(Opcode::BALANCE, "BALANCE", 1, 1, &[], Special);
    put(Opcode::CALLER, "CALLER", 0, 1, &[], Base);
    put(Opcode::CALLDATALOAD, "CALLDATALOAD", 1, 1, &[], VeryLow);
    put(Opcode::CALLDATACOPY, "CALLDATACOPY", 3, 0, &[0, 1, 2], VeryLow);
    put(Opcode::EXTCODESIZE, "EXTCODESIZE", 1, 1, &[], Special);
    put(Opcode::EXTCODECOPY, "EXTCODECOPY", 4, 0, &[1, 2, 3], Special);
    put(Opcode::BLOCKHASH, "BLOCKHASH", 1, 1, &[], Special);
    put(Opcode::POP, "POP", 1, 0, &[], Base);
    put(Opcode::MLOAD, "MLOAD", 1, 1, &[0], VeryLow);
    put(Opcode::MSTORE, "MSTORE", 2, 0, &[0], VeryLow);
    put(Opcode::MSTORE8, "MSTORE8", 2, 0, &[0], VeryLow);
    put(Opcode::SLOAD, "SLOAD", 1, 1, &[], Special);
    put(Opcode::SSTORE, "SSTORE", 2, 0, &[], Special);
    put(Opcode::MSIZE, "MSIZE", 0, 1, &[], Base);
    for n in 1..=32 {
        put(Opcode::push(n), PUSH_NAMES[n - 1], 0, 1, &[], VeryLow);
    }
    for n in 1..=16 {
        put(Opcode::dup(n), DUP_NAMES[n - 1], n, n + 1, &[], VeryLow);
        put(Opcode::swap(n), SWAP_NAMES[n - 1], n + 1, n + 1, &[], VeryLow);
    }
    table
}

/// Static metadata for `opcode`; total over the supported subset.
pub fn instruction_info(opcode: u8) -> Result<&'static OpcodeInfo, VmError> {
    OPCODE_TABLE[opcode as usize].as_ref().ok_or(VmError::UnknownOpcode { opcode, offset: None })
}

/// Every supported opcode in ascending byte order.
pub fn supported_opcodes() -> impl Iterator<Item = Opcode> {
    OPCODE_TABLE.iter().flatten().map(|info| info.opcode)
}

/// Looks an opcode up by mnemonic (case-insensitive).
pub fn opcode_by_mnemonic(name: &str) -> Option<Opcode> {
    if name.eq_ignore_ascii_case("SUICIDE") {
        return Some(Opcode::SUICIDE);
    }
    supported_opcodes().find(|op| op.mnemonic().eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_is_binary() {
        let info = instruction_info(0x01).unwrap();
        assert_eq!((info.arity_in, info.arity_out, info.uses_memory), (2, 1, false));
    }

    #[test]
    fn swap16_needs_seventeen() {
        let info = Opcode::SWAP16.info().unwrap();
        assert_eq!((info.arity_in, info.arity_out), (17, 17));
    }

    #[test]
    fn mload_addresses_memory_at_top() {
        let info = Opcode::MLOAD.info().unwrap();
        assert_eq!((info.arity_in, info.arity_out), (1, 1));
        assert!(info.uses_memory);
        assert_eq!(info.memory_arg_positions, &[0]);
    }

    #[test]
    fn unknown_opcodes_are_rejected() {
        for byte in [0x56u8, 0x57, 0xf1, 0xff, 0x0b] {
            assert!(matches!(
                instruction_info(byte),
                Err(VmError::UnknownOpcode { opcode, .. }) if opcode == byte
            ));
        }
    }

    #[test]
    fn table_invariants() {
        let mut count = 0;
        for op in supported_opcodes() {
            let info = op.info().unwrap();
            assert!(info.arity_in <= 17, "{op:?}");
            assert_eq!(info.memory_arg_positions.is_empty(), !info.uses_memory);
            assert!(info.memory_arg_positions.iter().all(|&p| p < info.arity_in));
            count += 1;
        }
        // 22 named opcodes + 32 PUSH + 16 DUP + 16 SWAP
        assert_eq!(count, 86);
    }

    #[test]
    fn mnemonic_lookup_round_trips() {
        for op in supported_opcodes() {
            assert_eq!(opcode_by_mnemonic(op.mnemonic()), Some(op));
        }
        assert_eq!(opcode_by_mnemonic("suicide"), Some(Opcode::SUICIDE));
    }
}
