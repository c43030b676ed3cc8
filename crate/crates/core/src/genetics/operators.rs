//! Variation operators. Both split and replace whole atoms, so guards are
//! never separated from their cores.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::generate::{guard_atom, random_core};
use super::universe::InstructionUniverse;
use crate::vm::{Atom, Program};

/// Attempts made before an operator gives up and returns its input.
pub const RETRY_BUDGET: usize = 8;

/// Stack depth -> positions of the atoms before which the simulated stack
/// holds that many elements. Position 0 is always present, so an empty
/// program maps to `{0: [0]}`.
pub fn create_stack_size_mapping(program: &Program) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let depths = program.atom_depths();
    let starts = depths.len().saturating_sub(1).max(1);
    for (pos, depth) in depths.into_iter().take(starts).enumerate() {
        map.entry(depth).or_default().push(pos);
    }
    map
}

/// Splices `a[..i] ++ b[j..]`.
fn splice(a: &Program, i: usize, b: &Program, j: usize) -> Program {
    let atoms = a.atoms[..i].iter().chain(&b.atoms[j..]).cloned().collect();
    Program::new(atoms)
}

/// Swaps tails at positions of equal stack depth. Each child keeps a
/// non-empty tail of the other parent. Falls back to the parents when no
/// valid pair is found within the retry budget.
pub fn cross_over<R: Rng + ?Sized>(p1: &Program, p2: &Program, rng: &mut R) -> (Program, Program) {
    let m1 = create_stack_size_mapping(p1);
    let m2 = create_stack_size_mapping(p2);
    let shared: Vec<usize> = m1.keys().filter(|s| m2.contains_key(s)).copied().collect();
    for _ in 0..RETRY_BUDGET {
        let s = *shared.choose(rng).expect("depth 0 is always shared");
        let i = *m1[&s].choose(rng).expect("non-empty");
        let j = *m2[&s].choose(rng).expect("non-empty");
        let c1 = splice(p1, i, p2, j);
        let c2 = splice(p2, j, p1, i);
        if c1.validate().ok && c2.validate().ok {
            return (c1, c2);
        }
    }
    (p1.clone(), p2.clone())
}

/// Replaces one core with an instruction needing no more inputs and leaving
/// the same number of outputs. Returns the input unchanged when the chosen
/// core has no candidates or no valid replacement is found.
pub fn mutate<R: Rng + ?Sized>(program: &Program, universe: &InstructionUniverse, rng: &mut R) -> Program {
    if program.atoms.is_empty() {
        return program.clone();
    }
    for _ in 0..RETRY_BUDGET {
        let pos = rng.random_range(0..program.atoms.len());
        let candidates = universe.mutation_candidates(program.atoms[pos].core.opcode);
        let Some(&replacement) = candidates.choose(rng) else {
            return program.clone();
        };
        let atom: Atom = guard_atom(random_core(replacement, rng), rng);
        let mut out = program.clone();
        out.atoms[pos] = atom;
        if out.validate().ok {
            return out;
        }
    }
    program.clone()
}
