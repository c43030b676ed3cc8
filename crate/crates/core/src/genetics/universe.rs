//! Instruction level sets and profile-derived sampling weights.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::GeneticsError;
use crate::profiler::InstructionProfile;
use crate::vm::{supported_opcodes, Opcode};

/// Deepest level set; `SWAP16` needs 17 stack elements.
pub const MAX_LEVEL: usize = 17;

/// Weight given to instructions whose throughput is so high that the
/// logarithmic weight underflows.
pub const MIN_WEIGHT: f64 = 1e-9;

/// The generatable instructions, grouped by the stack depth they need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionUniverse {
    instructions: Vec<Opcode>,
    /// `level_sets[n]` holds every instruction with `a(I) <= n`.
    level_sets: Vec<Vec<Opcode>>,
}

impl InstructionUniverse {
    pub fn instructions(&self) -> &[Opcode] {
        &self.instructions
    }

    /// Instructions runnable with `depth` elements on the stack; depths past
    /// the deepest set map onto it.
    pub fn level(&self, depth: usize) -> &[Opcode] {
        &self.level_sets[depth.min(MAX_LEVEL)]
    }

    pub fn contains(&self, opcode: Opcode) -> bool {
        self.instructions.binary_search(&opcode).is_ok()
    }

    /// Replacement candidates for `opcode`: same output arity, no more
    /// inputs, excluding `opcode` itself.
    pub fn mutation_candidates(&self, opcode: Opcode) -> Vec<Opcode> {
        let Ok(info) = opcode.info() else {
            return Vec::new();
        };
        self.level(info.arity_in)
            .iter()
            .copied()
            .filter(|&c| c != opcode && c.info().is_ok_and(|ci| ci.arity_out == info.arity_out))
            .collect()
    }
}

/// Every supported opcode except control flow (`STOP`).
pub fn build_universe() -> InstructionUniverse {
    let instructions: Vec<Opcode> = supported_opcodes().filter(|&op| op != Opcode::STOP).collect();
    let level_sets = (0..=MAX_LEVEL)
        .map(|n| instructions.iter().copied().filter(|op| op.info().is_ok_and(|i| i.arity_in <= n)).collect())
        .collect();
    InstructionUniverse { instructions, level_sets }
}

/// Per-instruction weights and the per-level-set sampling distributions.
#[derive(Debug, Clone)]
pub struct SamplingWeights {
    weight: BTreeMap<Opcode, f64>,
    levels: Vec<LevelDistribution>,
}

#[derive(Debug, Clone)]
struct LevelDistribution {
    opcodes: Vec<Opcode>,
    probabilities: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl LevelDistribution {
    fn new(opcodes: &[Opcode], weight: &BTreeMap<Opcode, f64>) -> Self {
        let ws: Vec<f64> = opcodes.iter().map(|op| weight[op]).collect();
        let total: f64 = ws.iter().sum();
        let probabilities = ws.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&ws).expect("level sets are non-empty with positive weights");
        LevelDistribution { opcodes: opcodes.to_vec(), probabilities, index }
    }
}

impl SamplingWeights {
    /// Weights from explicit values; each must be positive and finite.
    pub fn from_weights(universe: &InstructionUniverse, weight: BTreeMap<Opcode, f64>) -> Result<Self, GeneticsError> {
        for &op in universe.instructions() {
            match weight.get(&op) {
                None => return Err(GeneticsError::MissingThroughput(op)),
                Some(w) if !(w.is_finite() && *w > 0.0) => return Err(GeneticsError::InvalidThroughput(op)),
                Some(_) => {}
            }
        }
        let levels = (0..=MAX_LEVEL).map(|n| LevelDistribution::new(universe.level(n), &weight)).collect();
        Ok(SamplingWeights { weight, levels })
    }

    pub fn uniform(universe: &InstructionUniverse) -> Self {
        let weight = universe.instructions().iter().map(|&op| (op, 1.0)).collect();
        Self::from_weights(universe, weight).expect("uniform weights are valid")
    }

    pub fn weight(&self, opcode: Opcode) -> Option<f64> {
        self.weight.get(&opcode).copied()
    }

    /// `P(opcode)` within the level set for `depth`.
    pub fn probability(&self, depth: usize, opcode: Opcode) -> Option<f64> {
        let level = &self.levels[depth.min(MAX_LEVEL)];
        level.opcodes.iter().position(|&op| op == opcode).map(|i| level.probabilities[i])
    }

    /// The `(opcode, probability)` table of one level set.
    pub fn distribution(&self, depth: usize) -> impl Iterator<Item = (Opcode, f64)> + '_ {
        let level = &self.levels[depth.min(MAX_LEVEL)];
        level.opcodes.iter().copied().zip(level.probabilities.iter().copied())
    }

    /// Draws from the level set for `depth`.
    pub fn sample<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Opcode {
        let level = &self.levels[depth.min(MAX_LEVEL)];
        level.opcodes[level.index.sample(rng)]
    }
}

/// `W(I) = ln(1 + 1/throughput(I))`, with throughput in gas per microsecond.
pub fn weight_for_throughput(throughput: f64) -> f64 {
    (1.0 / throughput).ln_1p().max(MIN_WEIGHT)
}

pub fn init_weights(
    universe: &InstructionUniverse,
    profile: &InstructionProfile,
) -> Result<SamplingWeights, GeneticsError> {
    let mut weight = BTreeMap::new();
    for &op in universe.instructions() {
        let t = profile.throughput(op).ok_or(GeneticsError::MissingThroughput(op))?;
        if t.is_nan() || t <= 0.0 {
            return Err(GeneticsError::InvalidThroughput(op));
        }
        weight.insert(op, weight_for_throughput(t));
    }
    SamplingWeights::from_weights(universe, weight)
}

/// Draws from `level_set` with probabilities proportional to the weights.
pub fn biased_sample<R: Rng + ?Sized>(level_set: &[Opcode], weights: &SamplingWeights, rng: &mut R) -> Opcode {
    assert!(!level_set.is_empty(), "cannot sample from an empty level set");
    let ws = level_set.iter().map(|&op| weights.weight(op).unwrap_or(MIN_WEIGHT));
    let index = WeightedIndex::new(ws).expect("positive weights");
    level_set[index.sample(rng)]
}
