//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rea_core::analysis::{
    covariance, first_principal_component, multivariate_correlation, ols, pearson, principal_axis, standardize,
    ResourceMatrix, MEMORY, STORAGE,
};
use rea_core::genetics::{
    build_universe, cross_over, default_profile, evolve, generate_program, mutate, replay, GaConfig, GenerationLog,
    SamplingWeights,
};
use rea_core::profiler::{cross_block_experiment, page_cache_experiment, SpeedupDistribution};
use rea_core::state::{IoCostModel, StateBackend, StateConfig};
use rea_core::vm::{
    total_transaction_gas, Era, ExecutionContext, GasSchedule, Opcode, Program, Repricing, Vm, VmError,
};
use rea_core::workload::{self, storage_blocks};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gas_schedule_exactness() -> Outcome {
    let program = Program::from_hex("6002600302600555").map_err(|e| e.to_string())?;
    let vm = Vm::default();
    let mut state = StateBackend::in_memory(StateConfig::default());
    let m = vm.execute(&program, &ExecutionContext::default(), &mut state).map_err(|e| e.to_string())?.measurement;
    let total = total_transaction_gas(m.gas_used, &vm.schedule);
    ensure(m.gas_used == 20_014 && total == 41_014, || format!("execution {} total {}", m.gas_used, total))?;
    Ok(format!("execution gas {} total {}", m.gas_used, total))
}

fn eip150_diff() -> Outcome {
    let diff = GasSchedule::new(Era::Pre).diff(&GasSchedule::new(Era::Post));
    let got: BTreeSet<(u8, u64, u64)> = diff.iter().map(|r: &Repricing| (r.opcode.0, r.before, r.after)).collect();
    let want: BTreeSet<(u8, u64, u64)> = [
        (Opcode::EXTCODESIZE.0, 20, 700),
        (Opcode::BALANCE.0, 20, 400),
        (Opcode::SLOAD.0, 50, 200),
        (Opcode::SUICIDE.0, 0, 5000),
    ]
    .into();
    ensure(got == want, || format!("diff was {diff:?}"))?;
    Ok(format!("{} repriced entries", diff.len()))
}

fn genome_validity() -> Outcome {
    let universe = build_universe();
    let weights = SamplingWeights::uniform(&universe);
    let vm = Vm::default();
    let ctx = ExecutionContext::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = StateBackend::in_memory(StateConfig::default());
    let mut check = |p: &Program, what: &str| -> Result<(), String> {
        let report = p.validate();
        ensure(report.ok, || format!("{what} failed validation: {:?}", report.violation))?;
        match vm.execute(p, &ctx, &mut state) {
            Ok(_) => Ok(()),
            Err(e @ VmError::InternalFault { .. }) => Err(format!("{what}: {e}")),
            Err(e) => Err(format!("{what}: unexpected error {e}")),
        }
    };
    let n = 10_000;
    let programs: Vec<Program> = (0..n)
        .map(|_| {
            let size = rng.random_range(1..=300);
            generate_program(size, &universe, &weights, &mut rng)
        })
        .collect();
    for p in &programs {
        check(p, "generated program")?;
    }
    for _ in 0..n {
        let a = &programs[rng.random_range(0..n)];
        let b = &programs[rng.random_range(0..n)];
        let (c1, c2) = cross_over(a, b, &mut rng);
        check(&c1, "crossover child")?;
        check(&c2, "crossover child")?;
    }
    for p in &programs {
        let m = mutate(p, &universe, &mut rng);
        check(&m, "mutant")?;
    }
    Ok(format!("{n} generated, {n} crossover pairs, {n} mutants valid and executed"))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn run_default_search() -> Result<GenerationLog, String> {
    let config = GaConfig::default();
    let vm = Vm::default();
    let ctx = ExecutionContext::default();
    let mut profile_state = StateBackend::in_memory(StateConfig::default());
    let profile = default_profile(&vm, &ctx, &mut profile_state, config.rng_seed).map_err(|e| e.to_string())?;
    let mut state = StateBackend::in_memory(StateConfig::default());
    evolve(&config, &profile, &vm, &ctx, &mut state).map_err(|e| e.to_string())
}

fn ga_progress(log: &GenerationLog) -> Outcome {
    let again = run_default_search()?;
    ensure(log.header.config.generations == 50, || "not a 50-generation run".into())?;
    let gen0 = median(&log.records[0].fitness);
    let best = log.records.last().ok_or("empty log")?.best;
    let ratio = best / gen0;
    let bests = log.best_so_far();
    ensure(bests.windows(2).all(|w| w[1] <= w[0]), || "best-so-far increased".into())?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    log.write_jsonl(&mut a).map_err(|e| e.to_string())?;
    again.write_jsonl(&mut b).map_err(|e| e.to_string())?;
    ensure(a == b, || "two runs with the same seed differ".into())?;
    ensure(ratio <= 0.2, || format!("best {best:.0} gas/s is {:.1}% of generation-0 median {gen0:.0}", ratio * 100.0))?;
    Ok(format!(
        "best {best:.0} gas/s = {:.1}% of generation-0 median {gen0:.0}; monotone; runs bit-identical",
        ratio * 100.0
    ))
}

/// Closed-form projection onto the top eigenvector from a general
/// symmetric eigensolver.
fn oracle_axis(cols: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = cols[0].len();
    let m = cols.len();
    let x = DMatrix::from_fn(n, m, |r, c| cols[c][r]);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let top = (0..m).max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])).expect("m >= 1");
    let mut e: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let sum: f64 = e.iter().sum();
    let negative =
        if sum.abs() > 1e-8 { sum < 0.0 } else { e.iter().find(|v| v.abs() > 1e-8).is_some_and(|v| *v < 0.0) };
    if negative {
        e.iter_mut().for_each(|v| *v = -*v);
    }
    (e, eig.eigenvalues[top])
}

fn statistics_oracles() -> Outcome {
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pca_checked = 0;
    for case in 0..200 {
        let n = rng.random_range(3..30);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| rng.random_range(-3.0..3.0) * v + rng.random_range(-50.0..50.0)).collect();
        let nf = n as f64;

        // Pearson against the raw-moment formula.
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let r_oracle = (nf * sxy - sx * sy) / ((nf * sxx - sx * sx) * (nf * syy - sy * sy)).sqrt();
        let r = pearson(&x, &y).map_err(|e| e.to_string())?;
        ensure((r - r_oracle).abs() <= tol, || format!("case {case}: pearson {r} vs {r_oracle}"))?;

        // Standardize against the definition.
        let mu = sx / nf;
        let sd = (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / nf).sqrt();
        let z = standardize(&x).map_err(|e| e.to_string())?;
        for (zi, xi) in z.iter().zip(&x) {
            let expect = (xi - mu) / sd;
            ensure((zi - expect).abs() <= tol, || format!("case {case}: standardize {zi} vs {expect}"))?;
        }

        // OLS against the normal equations.
        let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x[r] });
        let beta = (design.transpose() * &design)
            .lu()
            .solve(&(design.transpose() * DVector::from_vec(y.clone())))
            .ok_or("singular normal equations")?;
        let fit = ols(&x, &y).map_err(|e| e.to_string())?;
        ensure((fit.intercept - beta[0]).abs() <= tol * (1.0 + beta[0].abs()), || {
            format!("case {case}: intercept {} vs {}", fit.intercept, beta[0])
        })?;
        ensure((fit.slope - beta[1]).abs() <= tol * (1.0 + beta[1].abs()), || {
            format!("case {case}: slope {} vs {}", fit.slope, beta[1])
        })?;

        // PCA against the symmetric eigensolver on well-separated spectra.
        let m = rng.random_range(1..=3);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|k| {
                let w = rng.random_range(0.2..1.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
                x.iter().map(|v| w * v + rng.random_range(-40.0..40.0)).collect::<Vec<f64>>()
            })
            .map(|c| standardize(&c).expect("non-constant"))
            .collect();
        let c = covariance(&cols).map_err(|e| e.to_string())?;
        let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| c[i][j]));
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        if m > 1 && ev[1] / ev[0] > 0.9 {
            continue;
        }
        let (e, lambda) = oracle_axis(&cols);
        let axis = principal_axis(&cols).map_err(|e| e.to_string())?;
        ensure((axis.eigenvalue - lambda).abs() <= tol, || {
            format!("case {case}: eigenvalue {} vs {lambda}", axis.eigenvalue)
        })?;
        let proj = first_principal_component(&cols).map_err(|e| e.to_string())?;
        for r in 0..n {
            let expect: f64 = (0..m).map(|k| cols[k][r] * e[k]).sum();
            ensure((proj[r] - expect).abs() <= tol, || format!("case {case}: projection {} vs {expect}", proj[r]))?;
        }
        pca_checked += 1;
    }
    ensure(pca_checked >= 100, || format!("only {pca_checked} PCA instances checked"))?;
    let v: Vec<f64> = (0..50).map(|_| rng.random_range(-1e6..1e6)).collect();
    let same = pearson(&v, &v).map_err(|e| e.to_string())?;
    ensure((same - 1.0).abs() <= 1e-12, || format!("pearson(v, v) = {same}"))?;
    Ok(format!("200 pearson/standardize/OLS and {pca_checked} PCA instances within 1e-8; pearson(v, v) = {same}"))
}

fn storage_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let programs = workload::storage_workload(1_000, &mut rng);
    let vm = Vm::new(GasSchedule::new(Era::Post), Default::default());
    let ctx = ExecutionContext::default();
    let mut state = StateBackend::in_memory(StateConfig::default());
    let mut storage = Vec::new();
    let mut memory = Vec::new();
    let mut gas = Vec::new();
    for p in &programs {
        let m = vm.execute(p, &ctx, &mut state).map_err(|e| e.to_string())?.measurement;
        storage.push(m.storage_words_allocated as f64);
        memory.push(m.mem_delta as f64);
        gas.push(m.gas_used as f64);
    }
    let single = pearson(&storage, &gas).map_err(|e| e.to_string())?;
    let matrix = ResourceMatrix::new(vec![(STORAGE.to_string(), storage), (MEMORY.to_string(), memory)], gas)
        .map_err(|e| e.to_string())?;
    let multi = multivariate_correlation(&matrix, &[STORAGE, MEMORY]).map_err(|e| e.to_string())?;
    ensure(single >= 0.9, || format!("storage score {single:.3}"))?;
    ensure(multi >= single, || format!("storage/memory {multi:.4} below storage {single:.4}"))?;
    Ok(format!("storage {single:.3}, storage/memory {multi:.3}"))
}

fn cache_experiments() -> Outcome {
    let vm = Vm::default();
    let ctx = ExecutionContext::default();
    let config = StateConfig::default();
    let costs = config.costs;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let contracts = workload::storage_heavy_contracts(100, 800_000, 100, &mut rng);
    let mut ratios = Vec::new();
    let mut worst = 0f64;
    for contract in &contracts {
        let mut state = StateBackend::in_memory(config);
        let result = page_cache_experiment(contract, 3, &vm, &ctx, &mut state).map_err(|e| e.to_string())?;
        // Step time alone, then every read a page hit or a miss.
        let free = IoCostModel { lru_hit_ns: 0, page_hit_ns: 0, miss_ns: 0, write_ns: 0 };
        let mut quiet = StateBackend::in_memory(StateConfig { costs: free, ..config });
        let m = vm.execute(contract, &ctx, &mut quiet).map_err(|e| e.to_string())?.measurement;
        let warm = m.elapsed_ns as f64 + m.io_reads as f64 * costs.page_hit_ns as f64;
        let cold = m.elapsed_ns as f64 + m.io_reads as f64 * costs.miss_ns as f64;
        let expected = cold / warm;
        worst = worst.max((result.ratio - expected).abs() / expected);
        ratios.push(result.ratio);
    }
    let dist = SpeedupDistribution::from_ratios(ratios).ok_or("invalid ratios")?;
    ensure(worst <= 0.05, || format!("ratio deviates {:.2}% from the cost model", worst * 100.0))?;
    ensure(dist.min >= 20.0 && dist.max <= 40.0, || format!("ratios span [{:.2}, {:.2}]", dist.min, dist.max))?;

    // 14 blocks of about 4,400 fresh keys fit the 65,536-entry page cache; 16 do not.
    let mut pass_ratio = Vec::new();
    for n_blocks in [14, 16] {
        let blocks = storage_blocks(n_blocks, 900_000, 90_000, &mut rng);
        let mut state = StateBackend::in_memory(config);
        let passes = cross_block_experiment(&blocks, 3, &vm, &ctx, &mut state).map_err(|e| e.to_string())?;
        let t: Vec<f64> = passes.iter().map(|p| p.total_ns as f64).collect();
        pass_ratio.push((n_blocks, t[1] / t[0], t[2] / t[1]));
    }
    let (_, fit_speedup, fit_flat) = pass_ratio[0];
    let (_, over_speedup, _) = pass_ratio[1];
    ensure(fit_speedup < 0.5 && (fit_flat - 1.0).abs() < 0.01, || {
        format!("14 blocks: pass2/pass1 {fit_speedup:.3}, pass3/pass2 {fit_flat:.3}")
    })?;
    ensure(over_speedup > 0.95, || format!("16 blocks: pass2/pass1 {over_speedup:.3}"))?;
    Ok(format!(
        "page cache ratios [{:.2}, {:.2}] median {:.2}, max model deviation {:.3}%; cross-block pass2/pass1 {:.3} at 14 blocks, {:.3} at 16",
        dist.min,
        dist.max,
        dist.median,
        worst * 100.0,
        fit_speedup,
        over_speedup
    ))
}

fn replay_determinism(log: &GenerationLog) -> Outcome {
    let mut state = rea_core::genetics::fresh_state(log);
    let report = replay(log, 3, &mut state).map_err(|e| e.to_string())?;
    ensure(!report.programs.is_empty(), || "nothing replayed".into())?;
    let diverged = report.rows.iter().filter(|r| log.records[r.gen].fitness[r.index] != r.fitness).count();
    ensure(diverged == 0, || format!("{diverged} of {} executions differ from the log", report.rows.len()))?;
    let unstable = report.programs.iter().filter(|p| p.mean != p.logged || p.std != 0.0).count();
    ensure(unstable == 0, || format!("{unstable} programs have non-zero spread"))?;
    Ok(format!("{} programs re-executed 3 times, every fitness identical to the log, std 0", report.programs.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed < budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail} ({elapsed:.2?})");
            }
        }
    };
    let secs = Duration::from_secs;
    report(1, "gas-schedule exactness", secs(1), &mut gas_schedule_exactness);
    report(2, "era repricing diff", secs(1), &mut eip150_diff);
    report(3, "genome validity", secs(120), &mut genome_validity);
    let search_start = Instant::now();
    let log = run_default_search();
    let first_run = search_start.elapsed();
    match log {
        Ok(log) => {
            report(4, "GA progress", secs(600).saturating_sub(first_run), &mut || ga_progress(&log));
            report(5, "statistics oracles", secs(60), &mut statistics_oracles);
            report(6, "storage dominance", secs(300), &mut storage_dominance);
            report(7, "cache experiments", secs(300), &mut cache_experiments);
            report(8, "replay determinism", secs(300), &mut || replay_determinism(&log));
        }
        Err(e) => {
            report(4, "GA progress", secs(600), &mut || Err(e.clone()));
            report(5, "statistics oracles", secs(60), &mut statistics_oracles);
            report(6, "storage dominance", secs(300), &mut storage_dominance);
            report(7, "cache experiments", secs(300), &mut cache_experiments);
            report(8, "replay determinism", secs(300), &mut || Err("no GA log".into()));
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
