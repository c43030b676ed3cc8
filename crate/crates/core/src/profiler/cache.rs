//! Cold versus warm cache timing.

use serde::{Deserialize, Serialize};

use super::ProfilerError;
use crate::state::{KvStore, StateBackend};
use crate::vm::{ExecutionContext, Program, Vm};

/// Timings of one contract with warm and with dropped caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageCacheResult {
    pub warm_ns: Vec<u64>,
    pub cold_ns: Vec<u64>,
    pub warm_mean_ns: f64,
    pub cold_mean_ns: f64,
    /// `cold_mean_ns / warm_mean_ns`; 1 when both are zero.
    pub ratio: f64,
}

fn mean(xs: &[u64]) -> f64 {
    xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
}

/// Runs `contract` `n` times warm and `n` times cold.
///
/// Every run starts from the same persisted data and a fresh application
/// LRU, as a newly started process would. Warm runs follow a priming run
/// and find their keys in the page cache; cold runs drop the page cache
/// first. Persisted data is left as it was found.
pub fn page_cache_experiment<S: KvStore>(
    contract: &Program,
    n: usize,
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<PageCacheResult, ProfilerError> {
    if n == 0 {
        return Err(ProfilerError::InvalidArgument("n must be at least 1"));
    }
    let vm = vm.clone().with_trace(false);
    let original = state.snapshot();
    let run = |state: &mut StateBackend<S>, drop_page: bool| -> Result<u64, ProfilerError> {
        state.restore_data(&original)?;
        if drop_page {
            state.drop_caches();
        } else {
            state.drop_app_cache();
        }
        Ok(vm.execute(contract, ctx, state)?.measurement.elapsed_ns)
    };
    run(state, false)?;
    let warm_ns = (0..n).map(|_| run(state, false)).collect::<Result<Vec<_>, _>>()?;
    let cold_ns = (0..n).map(|_| run(state, true)).collect::<Result<Vec<_>, _>>()?;
    state.restore_data(&original)?;
    let warm_mean_ns = mean(&warm_ns);
    let cold_mean_ns = mean(&cold_ns);
    let ratio = if warm_mean_ns == 0.0 && cold_mean_ns == 0.0 { 1.0 } else { cold_mean_ns / warm_mean_ns };
    Ok(PageCacheResult { warm_ns, cold_ns, warm_mean_ns, cold_mean_ns, ratio })
}

/// Cold/warm ratios over a set of contracts, binned at width 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupDistribution {
    pub ratios: Vec<f64>,
    /// `(lower edge, count)` for each bin `[edge, edge + 1)`.
    pub bins: Vec<(f64, usize)>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl SpeedupDistribution {
    pub const BIN_WIDTH: f64 = 1.0;

    /// `None` for an empty input or any non-positive or non-finite ratio.
    pub fn from_ratios(ratios: Vec<f64>) -> Option<Self> {
        if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return None;
        }
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        let first = (sorted[0] / Self::BIN_WIDTH).floor();
        let last = (sorted[n - 1] / Self::BIN_WIDTH).floor();
        let mut bins: Vec<(f64, usize)> =
            (0..=(last - first) as usize).map(|i| ((first + i as f64) * Self::BIN_WIDTH, 0)).collect();
        for r in &sorted {
            let idx = ((r / Self::BIN_WIDTH).floor() - first) as usize;
            bins[idx].1 += 1;
        }
        Some(SpeedupDistribution { ratios, bins, min: sorted[0], median, max: sorted[n - 1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossBlockPass {
    /// 1-based pass number.
    pub pass: usize,
    pub total_ns: u64,
    pub warm_up: bool,
}

/// Executes the block sequence `m` times back to back.
///
/// Caches are dropped once before the first pass and then left alone, so
/// later passes benefit from whatever the first pass left resident.
/// Persisted data is reset before every pass.
pub fn cross_block_experiment<S: KvStore>(
    blocks: &[Vec<Program>],
    m: usize,
    vm: &Vm,
    ctx: &ExecutionContext,
    state: &mut StateBackend<S>,
) -> Result<Vec<CrossBlockPass>, ProfilerError> {
    if blocks.is_empty() {
        return Err(ProfilerError::InvalidArgument("at least one block is required"));
    }
    if m < 2 {
        return Err(ProfilerError::InvalidArgument("m must be at least 2"));
    }
    let vm = vm.clone().with_trace(false);
    let original = state.snapshot();
    state.drop_caches();
    let mut passes = Vec::with_capacity(m);
    for pass in 1..=m {
        state.restore_data(&original)?;
        let mut total_ns = 0;
        for (i, block) in blocks.iter().enumerate() {
            let block_ctx = ExecutionContext { block_number: ctx.block_number + i as u64, ..ctx.clone() };
            for contract in block {
                total_ns += vm.execute(contract, &block_ctx, state)?.measurement.elapsed_ns;
            }
        }
        passes.push(CrossBlockPass { pass, total_ns, warm_up: pass == 1 });
    }
    state.restore_data(&original)?;
    Ok(passes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::StateConfig;
    use crate::vm::{Atom, Instruction, Opcode, Word};

    fn sload_program(slots: impl IntoIterator<Item = u64>) -> Program {
        let mut atoms = Vec::new();
        for s in slots {
            atoms.push(Atom::bare(Instruction::push_word(Word::from(s))));
            atoms.push(Atom::bare(Instruction::op(Opcode::SLOAD)));
            atoms.push(Atom::bare(Instruction::op(Opcode::POP)));
        }
        Program::new(atoms)
    }

    fn backend(lru: usize, page: usize) -> StateBackend {
        StateBackend::in_memory(StateConfig { lru_capacity: lru, page_capacity: page, ..StateConfig::default() })
    }

    #[test]
    fn io_free_contract_has_unit_ratio() {
        let p = Program::new(vec![Atom::bare(Instruction::push1(1)), Atom::bare(Instruction::op(Opcode::POP))]);
        let r =
            page_cache_experiment(&p, 3, &Vm::default(), &ExecutionContext::default(), &mut backend(16, 16)).unwrap();
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn sload_ratio_matches_cost_model() {
        let vm = Vm::default();
        let p = sload_program((0..10).chain(0..10));
        let mut state = backend(64, 64);
        let r = page_cache_experiment(&p, 4, &vm, &ExecutionContext::default(), &mut state).unwrap();
        let c = state.costs();
        let steps: u64 = p.instructions().map(|i| vm.step_costs.cost(i.opcode)).sum();
        let warm = steps + 10 * c.page_hit_ns + 10 * c.lru_hit_ns;
        let cold = steps + 10 * c.miss_ns + 10 * c.lru_hit_ns;
        assert_eq!(r.warm_mean_ns, warm as f64);
        assert_eq!(r.cold_mean_ns, cold as f64);
        assert!(r.cold_ns.iter().zip(&r.warm_ns).all(|(c, w)| c > w));
    }

    #[test]
    fn histogram_bins() {
        let d = SpeedupDistribution::from_ratios(vec![24.2, 24.9, 26.5, 33.0]).unwrap();
        assert_eq!(d.min, 24.2);
        assert_eq!(d.max, 33.0);
        assert_eq!(d.median, (24.9 + 26.5) / 2.0);
        assert_eq!(d.bins.len(), 10);
        assert_eq!(d.bins[0], (24.0, 2));
        assert_eq!(d.bins[9], (33.0, 1));
        assert!(SpeedupDistribution::from_ratios(vec![0.0]).is_none());
    }

    #[test]
    fn cross_block_small_working_set_speeds_up() {
        let blocks: Vec<Vec<Program>> = (0..4).map(|b| vec![sload_program(b * 10..b * 10 + 10)]).collect();
        let passes =
            cross_block_experiment(&blocks, 3, &Vm::default(), &ExecutionContext::default(), &mut backend(64, 64))
                .unwrap();
        assert!(passes[0].warm_up);
        assert!(passes[1].total_ns < passes[0].total_ns);
        assert_eq!(passes[1].total_ns, passes[2].total_ns);
    }

    #[test]
    fn cross_block_large_working_set_no_speedup() {
        let blocks: Vec<Vec<Program>> = (0..4).map(|b| vec![sload_program(b * 10..b * 10 + 10)]).collect();
        let passes =
            cross_block_experiment(&blocks, 3, &Vm::default(), &ExecutionContext::default(), &mut backend(16, 16))
                .unwrap();
        assert_eq!(passes[1].total_ns, passes[0].total_ns);
    }

    #[test]
    fn empty_blocks_take_no_time() {
        let blocks = vec![Vec::new(), Vec::new()];
        let passes =
            cross_block_experiment(&blocks, 2, &Vm::default(), &ExecutionContext::default(), &mut backend(4, 4))
                .unwrap();
        assert!(passes.iter().all(|p| p.total_ns == 0));
    }
}
