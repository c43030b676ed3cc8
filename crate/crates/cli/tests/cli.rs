use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rea(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rea")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = rea(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Data rows of a CSV written by the tool, after the header comment and
/// column names.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# rea "), "{} lacks the run header", path.display());
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let names: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let idx = names.iter().position(|n| *n == name).unwrap();
    rows(path).into_iter().map(|r| r[idx].clone()).collect()
}

fn mean_gas(path: &Path, mnemonic: &str) -> f64 {
    let row = rows(path).into_iter().find(|r| r[1] == mnemonic).unwrap();
    row[5].parse().unwrap()
}

#[test]
fn profile_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["profile", "--clock", "simulated", "--seed", "7", "--out", "a"]);
    ok(dir.path(), &["profile", "--clock", "simulated", "--seed", "7", "--out", "b"]);
    let a = fs::read(dir.path().join("a/instruction_profile.csv")).unwrap();
    let b = fs::read(dir.path().join("b/instruction_profile.csv")).unwrap();
    assert_eq!(a, b);
    let mnemonics = column(&dir.path().join("a/instruction_profile.csv"), "mnemonic");
    for m in ["ADD", "MUL", "DIV", "EXP"] {
        assert!(mnemonics.iter().any(|x| x == m), "{m} missing");
    }
}

#[test]
fn profile_follows_era() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["profile", "--era", "pre", "--out", "pre"]);
    ok(dir.path(), &["profile", "--era", "post", "--out", "post"]);
    assert_eq!(mean_gas(&dir.path().join("pre/instruction_profile.csv"), "EXTCODESIZE"), 20.0);
    assert_eq!(mean_gas(&dir.path().join("post/instruction_profile.csv"), "EXTCODESIZE"), 700.0);
}

#[test]
fn evolve_with_zero_generations() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["evolve", "--gens", "0", "--pop", "6", "--size", "50"]);
    assert_eq!(rows(&dir.path().join("summary.csv")).len(), 1);
    assert!(dir.path().join("instruction_profile.csv").exists());
}

#[test]
fn evolve_is_reproducible_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["evolve", "--gens", "4", "--pop", "8", "--size", "120", "--seed", "3"];
    ok(dir.path(), &[&args[..], &["--out", "a"]].concat());
    ok(dir.path(), &[&args[..], &["--out", "b"]].concat());
    let a = fs::read(dir.path().join("a/log.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/log.jsonl")).unwrap());

    // Best-so-far recomputed from the logged fitness values.
    let text = String::from_utf8(a).unwrap();
    let mut best = f64::INFINITY;
    let mut expected = Vec::new();
    for line in text.lines().filter(|l| l.contains("\"fitness\"")) {
        let start = line.find("\"fitness\":[").unwrap() + "\"fitness\":[".len();
        let end = start + line[start..].find(']').unwrap();
        for v in line[start..end].split(',') {
            best = best.min(v.parse::<f64>().unwrap());
        }
        expected.push(best);
    }
    let summary: Vec<f64> =
        column(&dir.path().join("a/summary.csv"), "best").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(summary, expected);
    assert!(summary.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn evolve_reads_a_saved_profile() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["profile", "--out", "p"]);
    ok(dir.path(), &["evolve", "--gens", "1", "--pop", "4", "--size", "40", "--profile", "p/instruction_profile.csv"]);
    assert!(!dir.path().join("instruction_profile.csv").exists());
    assert_eq!(rows(&dir.path().join("summary.csv")).len(), 2);
}

#[test]
fn replay_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["evolve", "--gens", "3", "--pop", "6", "--size", "80"]);
    ok(dir.path(), &["replay", "--log", "log.jsonl", "--k", "3", "--out", "r"]);
    let replay = dir.path().join("r/replay.csv");
    let std = column(&replay, "std");
    assert!(!std.is_empty());
    assert!(std.iter().all(|s| s.parse::<f64>().unwrap() == 0.0));
    assert_eq!(column(&replay, "logged"), column(&replay, "mean"));
    assert_eq!(rows(&dir.path().join("r/replay_summary.csv")).len(), 4);
}

#[test]
fn cache_bench_without_io_has_no_speedup() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cache-bench", "--corpus", "compute", "--contracts", "4", "--blocks", "2,3"]);
    for r in column(&dir.path().join("cache_speedup.csv"), "ratio") {
        assert!((r.parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }
    let passes = rows(&dir.path().join("cross_block.csv"));
    assert_eq!(passes.len(), 6);
    for block in passes.chunks(3) {
        assert!(block.iter().all(|r| r[2] == block[0][2]));
    }
}

#[test]
fn cache_bench_storage_ratios() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["cache-bench", "--contracts", "3", "--contract-gas", "100000", "--blocks", "1", "--block-gas", "200000"],
    );
    for r in column(&dir.path().join("cache_speedup.csv"), "ratio") {
        let r: f64 = r.parse().unwrap();
        assert!((20.0..=40.0).contains(&r), "{r}");
    }
    let total: Vec<u64> =
        column(&dir.path().join("cross_block.csv"), "total_ns").iter().map(|v| v.parse().unwrap()).collect();
    assert!(total[1] < total[0] && total[2] == total[1]);
}

#[test]
fn analyze_storage_dominated_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // Gas is 20,000 per allocated word plus unrelated memory and time.
    let mut csv = String::from("# fixture\ngas,time_ns,mem_plus,mem_minus,storage_alloc,storage_free,era\n");
    for i in 0..50u64 {
        let storage = i % 9;
        let mem = (i * 37) % 11 * 32;
        let time = 1000 + (i * 53) % 17;
        csv.push_str(&format!("{},{time},{mem},0,{storage},0,post\n", 20_000 * storage + 3 * (i % 5) + 21));
    }
    fs::write(dir.path().join("m.csv"), csv).unwrap();
    ok(dir.path(), &["analyze", "--input", "m.csv"]);
    let report = rows(&dir.path().join("correlation.csv"));
    let storage = report.iter().find(|r| r[0] == "post" && r[1] == "Storage").unwrap();
    assert!(storage[2].parse::<f64>().unwrap() >= 0.9);
    assert!(dir.path().join("scatter.csv").exists());
}

#[test]
fn measure_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["measure", "--count", "200"]);
    let m = dir.path().join("measurements.csv");
    assert_eq!(rows(&m).len(), 400);
    assert!(column(&m, "cache_hits").len() == 400);
    ok(dir.path(), &["analyze", "--input", "measurements.csv"]);
    let report = rows(&dir.path().join("correlation.csv"));
    let storage = report.iter().find(|r| r[0] == "post" && r[1] == "Storage").unwrap();
    assert!(storage[2].parse::<f64>().unwrap() >= 0.9);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# settings\nseed=11\nera=pre\nout=fromfile\n").unwrap();
    ok(dir.path(), &["profile", "--config", "run.cfg"]);
    let header = fs::read_to_string(dir.path().join("fromfile/instruction_profile.csv")).unwrap();
    assert!(header.starts_with("# rea 0.1.0 seed=11 config="));
    assert_eq!(mean_gas(&dir.path().join("fromfile/instruction_profile.csv"), "SLOAD"), 50.0);
    ok(dir.path(), &["profile", "--config", "run.cfg", "--seed", "12", "--era", "post"]);
    let path = dir.path().join("fromfile/instruction_profile.csv");
    assert!(fs::read_to_string(&path).unwrap().starts_with("# rea 0.1.0 seed=12 config="));
    assert_eq!(mean_gas(&path, "SLOAD"), 200.0);
}

#[test]
fn persistent_state_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["measure", "--count", "20", "--state", "state.log"]);
    assert!(dir.path().join("state.log").exists());
    ok(dir.path(), &["measure", "--count", "20", "--state", "state.log", "--out", "again"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| {
        let out = rea(dir.path(), args);
        assert!(out.stdout.is_empty(), "{args:?} wrote to stdout");
        assert!(!out.stderr.is_empty());
        out.status.code().unwrap()
    };
    assert_eq!(code(&["profile", "--clock", "sundial"]), 2);
    assert_eq!(code(&["profile", "--era", "mid"]), 2);
    fs::write(dir.path().join("bad.cfg"), "colour=red\n").unwrap();
    assert_eq!(code(&["profile", "--config", "bad.cfg"]), 2);
    assert_eq!(code(&["profile", "--config", "missing.cfg"]), 2);
    assert_eq!(code(&["evolve", "--pop", "0"]), 2);
    fs::create_dir(dir.path().join("dir")).unwrap();
    assert_eq!(code(&["measure", "--count", "2", "--state", "dir"]), 3);
    fs::write(dir.path().join("corrupt.log"), "not a state log\n").unwrap();
    assert_eq!(code(&["measure", "--count", "2", "--state", "corrupt.log"]), 3);
    fs::write(dir.path().join("bad.csv"), "gas,time_ns\n1,x\n").unwrap();
    assert_eq!(code(&["analyze", "--input", "bad.csv"]), 4);
    assert_eq!(code(&["analyze", "--input", "missing.csv"]), 4);
    assert_eq!(code(&["replay", "--log", "bad.csv"]), 4);
    fs::write(dir.path().join("bad_profile.csv"), "opcode,mnemonic\n0xzz,ADD\n").unwrap();
    assert_eq!(code(&["evolve", "--gens", "0", "--profile", "bad_profile.csv"]), 4);
}
