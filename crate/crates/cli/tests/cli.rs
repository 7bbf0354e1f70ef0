//! The `monochain` binary end to end: file formats, engines and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use monochain::JointSource;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_str()
        .unwrap()
        .to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monochain"))
        .env("MONOCHAIN_THREADS", "1")
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn write_block(dir: &Path, source: &str, n: usize, seed: u64) -> String {
    let src = JointSource::parse(&std::fs::read_to_string(source).unwrap()).unwrap();
    let file = path(dir, "block.txt");
    std::fs::write(&file, src.sample_block(n, seed).unwrap().to_text()).unwrap();
    file
}

#[test]
fn full_rate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let source = data("ternary_quinary.txt");
    let block = write_block(d, &source, 16, 4);
    let (c, cw, rec) = (path(d, "c.txt"), path(d, "cw.txt"), path(d, "rec.txt"));
    ok(&["construct", "--source", &source, "--random-seed", "2", "--n", "16", "--samples", "20",
        "--rates", "1.5849625007,2.3219280949", "--out", &c]);
    ok(&["encode", "--source", &source, "--block", &block, "--construction", &c, "--out", &cw]);
    ok(&["decode", "--source", &source, "--codeword", &cw, "--construction", &c, "--out", &rec]);
    assert_eq!(std::fs::read_to_string(rec).unwrap(), std::fs::read_to_string(block).unwrap());
}

#[test]
fn engines_write_the_same_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let source = data("binary.txt");
    let block = write_block(d, &source, 64, 11);
    let (c, cw) = (path(d, "c.txt"), path(d, "cw.txt"));
    ok(&["construct", "--source", &source, "--corner", "--n", "64", "--samples", "50",
        "--sum-rate-offset", "0.15", "--out", &c]);
    ok(&["encode", "--source", &source, "--block", &block, "--construction", &c, "--out", &cw]);
    let mut outputs = Vec::new();
    for engine in ["graph", "lazycopy"] {
        let (rec, cand) = (path(d, &format!("{engine}.txt")), path(d, &format!("{engine}.csv")));
        ok(&["decode", "--source", &source, "--codeword", &cw, "--construction", &c, "--list", "4",
            "--engine", engine, "--out", &rec, "--candidates", &cand]);
        outputs.push(std::fs::read_to_string(rec).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn construction_file_lists_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let c = path(dir.path(), "c.txt");
    ok(&["construct", "--source", &data("binary.txt"), "--alternating", "--n", "64", "--samples", "10",
        "--sum-rate-offset", "0.1", "--out", &c]);
    let text = std::fs::read_to_string(c).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 128);
}

#[test]
fn chain_generation() {
    assert_eq!(ok(&["chain-gen", "--mode", "extend", "--gamma", "1 2"]).split_whitespace().collect::<Vec<_>>(), ["1", "1", "2", "2"]);
    let corner = ok(&["chain-gen", "--mode", "corner", "--terminals", "3", "--n", "4"]);
    assert_eq!(corner.split_whitespace().count(), 12);
    let a = ok(&["chain-gen", "--mode", "random", "--n", "32", "--seed", "7"]);
    assert_eq!(a, ok(&["chain-gen", "--mode", "random", "--n", "32", "--seed", "7"]));
}

#[test]
fn simulate_and_bench_write_csv() {
    let sim = ok(&["simulate", "--source", &data("binary.txt"), "--corner", "--n", "16", "--trials", "20",
        "--list", "1,4", "--sweep", "0.1", "--samples", "20"]);
    let lines: Vec<&str> = sim.lines().collect();
    assert_eq!(lines[0], "n,chain_id,sum_rate,L,trials,block_errors,bler,seed");
    assert_eq!(lines.len(), 3);
    let bench = ok(&["bench", "--source", &data("binary.txt"), "--alternating", "--n-list", "16,32", "--rounds", "1"]);
    let lines: Vec<&str> = bench.lines().collect();
    assert_eq!(lines[0], "n,engine,mean_runtime_s,tensor_ops,fork_touches,pool_highwater");
    // lazy copy is dropped for an interleaved chain
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("graph")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = run(&["construct", "--source", "/nonexistent", "--corner", "--n", "4", "--rates", "0.5,0.5",
        "--out", &path(d, "c.txt")]);
    assert_eq!(missing.status.code(), Some(2));

    let source = data("binary.txt");
    let bad_n = run(&["construct", "--source", &source, "--corner", "--n", "6", "--rates", "0.5,0.5",
        "--out", &path(d, "c.txt")]);
    assert_eq!(bad_n.status.code(), Some(2));

    let block = write_block(d, &source, 8, 0);
    let (c, cw) = (path(d, "c.txt"), path(d, "cw.txt"));
    ok(&["construct", "--source", &source, "--random-seed", "3", "--n", "8", "--samples", "10",
        "--rates", "0.5,0.5", "--out", &c]);
    ok(&["encode", "--source", &source, "--block", &block, "--construction", &c, "--out", &cw]);
    // seed 3 interleaves the terminals, which lazy copy cannot decode
    let lazy = run(&["decode", "--source", &source, "--codeword", &cw, "--construction", &c, "--list", "2",
        "--engine", "lazycopy", "--out", &path(d, "r.txt")]);
    assert_eq!(lazy.status.code(), Some(3));
}
