//! Gas schedules for the two pricing eras.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::opcode::{supported_opcodes, Opcode, Tier};
use super::Word;

pub type Gas = u64;

/// Pricing era, split at the IO repricing fork.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Era {
    #[serde(alias = "pre_eip150")]
    Pre,
    #[serde(alias = "post_eip150")]
    Post,
}

impl std::str::FromStr for Era {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pre" | "pre_eip150" => Ok(Era::Pre),
            "post" | "post_eip150" => Ok(Era::Post),
            other => Err(format!("unknown era `{other}` (expected pre or post)")),
        }
    }
}

impl std::fmt::Display for Era {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Era::Pre => "pre",
            Era::Post => "post",
        })
    }
}

/// Fixed costs of the IO instructions whose prices differ between eras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoPrices {
    pub balance: Gas,
    pub extcodesize: Gas,
    pub extcodecopy: Gas,
    pub sload: Gas,
    pub blockhash: Gas,
    pub suicide: Gas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub era: Era,
    pub tier_zero: Gas,
    pub tier_base: Gas,
    pub tier_verylow: Gas,
    pub tier_low: Gas,
    pub tier_high: Gas,
    pub io: IoPrices,
    pub exp_base: Gas,
    pub exp_per_byte: Gas,
    pub copy_per_word: Gas,
    pub base_transaction_cost: Gas,
    pub memory_word_linear: Gas,
    pub memory_quadratic_divisor: u64,
    pub sstore_set: Gas,
    pub sstore_reset: Gas,
    pub sstore_refund: Gas,
}

/// One entry of an era comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repricing {
    pub opcode: Opcode,
    pub before: Gas,
    pub after: Gas,
}

impl GasSchedule {
    pub fn new(era: Era) -> Self {
        let io = match era {
            Era::Pre => {
                IoPrices { balance: 20, extcodesize: 20, extcodecopy: 20, sload: 50, blockhash: 20, suicide: 0 }
            }
            Era::Post => {
                IoPrices { balance: 400, extcodesize: 700, extcodecopy: 20, sload: 200, blockhash: 20, suicide: 5000 }
            }
        };
        GasSchedule {
            era,
            tier_zero: 0,
            tier_base: 2,
            tier_verylow: 3,
            tier_low: 5,
            tier_high: 10,
            io,
            exp_base: 10,
            exp_per_byte: 50,
            copy_per_word: 3,
            base_transaction_cost: 21_000,
            memory_word_linear: 3,
            memory_quadratic_divisor: 512,
            sstore_set: 20_000,
            sstore_reset: 5_000,
            sstore_refund: 15_000,
        }
    }

    pub fn pre_eip150() -> Self {
        Self::new(Era::Pre)
    }

    pub fn post_eip150() -> Self {
        Self::new(Era::Post)
    }

    pub fn tier_cost(&self, tier: Tier) -> Option<Gas> {
        match tier {
            Tier::Zero => Some(self.tier_zero),
            Tier::Base => Some(self.tier_base),
            Tier::VeryLow => Some(self.tier_verylow),
            Tier::Low => Some(self.tier_low),
            Tier::High => Some(self.tier_high),
            Tier::Special => None,
        }
    }

    /// The fixed part of an opcode's price, before any operand-dependent
    /// surcharge. Covers the executable subset and the SUICIDE entry.
    pub fn base_cost(&self, opcode: Opcode) -> Option<Gas> {
        let cost = match opcode {
            Opcode::SUICIDE => self.io.suicide,
            Opcode::BALANCE => self.io.balance,
            Opcode::EXTCODESIZE => self.io.extcodesize,
            Opcode::EXTCODECOPY => self.io.extcodecopy,
            Opcode::SLOAD => self.io.sload,
            Opcode::BLOCKHASH => self.io.blockhash,
            Opcode::EXP => self.exp_base,
            // Entirely operand dependent.
            Opcode::SSTORE => 0,
            op => self.tier_cost(op.info().ok()?.tier)?,
        };
        Some(cost)
    }

    /// Opcodes whose fixed price differs between `self` and `other`.
    pub fn diff(&self, other: &GasSchedule) -> Vec<Repricing> {
        supported_opcodes()
            .chain(std::iter::once(Opcode::SUICIDE))
            .filter_map(|op| {
                let before = self.base_cost(op)?;
                let after = other.base_cost(op)?;
                (before != after).then_some(Repricing { opcode: op, before, after })
            })
            .collect()
    }

    /// Total memory cost `3a + floor(a^2 / 512)` of `words` active words.
    pub fn memory_cost(&self, words: u64) -> Gas {
        let words = words as u128;
        let cost = self.memory_word_linear as u128 * words + words * words / self.memory_quadratic_divisor as u128;
        cost.min(Gas::MAX as u128) as Gas
    }

    /// Charge for growing memory from `old_words` to `new_words`.
    pub fn memory_expansion_cost(&self, old_words: u64, new_words: u64) -> Gas {
        debug_assert!(new_words >= old_words);
        if new_words <= old_words {
            return 0;
        }
        self.memory_cost(new_words) - self.memory_cost(old_words)
    }

    /// Charge for executing `opcode` given the stack before execution (top
    /// is the last element) and, for SSTORE, the slot's current value.
    /// Memory expansion is charged separately.
    pub fn gas_for(&self, opcode: Opcode, stack: &[Word], sstore_current: Option<Word>) -> Gas {
        let arg = |i: usize| stack.len().checked_sub(i + 1).map(|idx| stack[idx]);
        match opcode {
            Opcode::EXP => {
                let exponent = arg(1).unwrap_or_default();
                let bytes = (exponent.bits() as u64).div_ceil(8);
                self.exp_base + self.exp_per_byte * bytes
            }
            Opcode::SSTORE => {
                let new = arg(1).unwrap_or_default();
                let old = sstore_current.unwrap_or_default();
                if old.is_zero() && !new.is_zero() {
                    self.sstore_set
                } else {
                    self.sstore_reset
                }
            }
            Opcode::CALLDATACOPY => self.tier_verylow + self.copy_cost(arg(2).unwrap_or_default()),
            Opcode::EXTCODECOPY => self.io.extcodecopy + self.copy_cost(arg(3).unwrap_or_default()),
            op => self.base_cost(op).unwrap_or(0),
        }
    }

    /// Refund credited by an SSTORE that clears a slot.
    pub fn sstore_refund_for(&self, old: Word, new: Word) -> Gas {
        if !old.is_zero() && new.is_zero() {
            self.sstore_refund
        } else {
            0
        }
    }

    fn copy_cost(&self, size: Word) -> Gas {
        if size.bits() > 64 {
            return Gas::MAX / 4;
        }
        let words = size.low_u64().div_ceil(32);
        words.saturating_mul(self.copy_per_word)
    }

    /// Fixed-price table keyed by mnemonic for reports.
    pub fn price_table(&self) -> BTreeMap<&'static str, Gas> {
        supported_opcodes()
            .chain(std::iter::once(Opcode::SUICIDE))
            .filter_map(|op| Some((op.mnemonic(), self.base_cost(op)?)))
            .collect()
    }
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self::post_eip150()
    }
}

/// Execution gas plus the fixed per-transaction charge.
pub fn total_transaction_gas(execution_gas: Gas, schedule: &GasSchedule) -> Gas {
    execution_gas + schedule.base_transaction_cost
}
