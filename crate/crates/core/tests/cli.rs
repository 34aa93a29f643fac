use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_kidecomp");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("KIDECOMP_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const COMMUTING_PAIR: &str = r#"{
  "dim": 2,
  "labels": ["a", "b"],
  "states": {
    "a": {"rows": 2, "cols": 2, "re": [[0.5, 0.0], [0.0, 0.5]], "im": [[0.0, 0.0], [0.0, 0.0]]},
    "b": {"rows": 2, "cols": 2, "re": [[0.3333333333333333, 0.0], [0.0, 0.6666666666666666]], "im": [[0.0, 0.0], [0.0, 0.0]]}
  }
}"#;

fn write(dir: &Path, name: &str, contents: &str) -> String {
    std::fs::write(dir.join(name), contents).unwrap();
    name.to_string()
}

#[test]
fn decompose_commuting_pair_gives_two_unit_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    let out = run(&["decompose", "--input", &f], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema"], "ki-decomp/1");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["passed"], true);
    let blocks = v["decomposition"]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    for b in blocks {
        assert_eq!((b["n"].as_u64(), b["m"].as_u64()), (Some(1), Some(1)));
    }
}

#[test]
fn malformed_json_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.json", "{\"dim\": 2,");
    let out = run(&["decompose", "--input", &f], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_field_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let doc = COMMUTING_PAIR.replacen("\"dim\": 2,", "\"dim\": 2, \"extra\": 1,", 1);
    let f = write(dir.path(), "extra.json", &doc);
    assert_eq!(run(&["decompose", "--input", &f], dir.path()).status.code(), Some(1));
}

#[test]
fn coarse_rank_cut_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    let out = run(&["decompose", "--input", &f, "--tol-rank", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ambiguous rank"));
}

#[test]
fn invalid_tolerance_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    let out = run(&["decompose", "--input", &f, "--tol-residual", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn gen_planted_is_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-planted", "--dims", "2x1,1x2", "--labels", "3", "--seed", "7"];
    let mut a = args.to_vec();
    a.extend(["--output", "first"]);
    let mut b = args.to_vec();
    b.extend(["--output", "second"]);
    assert_eq!(run(&a, dir.path()).status.code(), Some(0));
    assert_eq!(run(&b, dir.path()).status.code(), Some(0));
    for suffix in ["experiment.json", "truth.json"] {
        let x = std::fs::read(dir.path().join(format!("first.{suffix}"))).unwrap();
        let y = std::fs::read(dir.path().join(format!("second.{suffix}"))).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{suffix} differs between runs");
    }
    let other = run(
        &["gen-planted", "--dims", "2x1,1x2", "--labels", "3", "--seed", "8"],
        dir.path(),
    );
    let seven = run(&args, dir.path());
    assert_ne!(json(&other)["experiment"], json(&seven)["experiment"]);
}

#[test]
fn gen_planted_then_decompose_recovers_dims() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["gen-planted", "--dims", "2x1,1x2", "--labels", "3", "--seed", "7", "--output", "p"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["decompose", "--input", "p.experiment.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let mut dims: Vec<(u64, u64)> = v["decomposition"]["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| (b["n"].as_u64().unwrap(), b["m"].as_u64().unwrap()))
        .collect();
    dims.sort();
    assert_eq!(dims, vec![(1, 2), (2, 1)]);
}

#[test]
fn gen_planted_dimension_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-planted", "--dims", "2x1,1x2", "--dim", "5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["gen-planted", "--dims", "2by1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_degenerate_block_is_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-planted", "--dims", "1x4", "--labels", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let flag = run(&["gen-planted", "--dims", "2x1", "--seed", "11"], dir.path());
    let env = Command::new(BIN)
        .args(["gen-planted", "--dims", "2x1"])
        .env("KIDECOMP_SEED", "11")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
}

#[test]
fn output_file_matches_stdout_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    let stdout = run(&["classical", "--input", &f], dir.path());
    let file = run(&["classical", "--input", &f, "--output", "report.json"], dir.path());
    assert_eq!(file.status.code(), Some(0));
    assert!(file.stdout.is_empty());
    let written = std::fs::read(dir.path().join("report.json")).unwrap();
    assert_eq!(written, stdout.stdout);
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 2, "temporary files left behind: {names:?}");
}

#[test]
fn broadcast_check_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    let v = json(&run(&["broadcast-check", "--input", &f], dir.path()));
    assert_eq!(v["broadcastable"], true);
    assert!(v["certificate"]["left_marginal"].as_f64().unwrap() <= 1e-9);
    assert!(v["witness"].is_object());

    let pure = r#"{"dim": 2, "labels": ["zero", "plus"], "states": {
        "zero": {"rows": 2, "cols": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]},
        "plus": {"rows": 2, "cols": 2, "re": [[0.5, 0.5], [0.5, 0.5]], "im": [[0.0, 0.0], [0.0, 0.0]]}}}"#;
    let g = write(dir.path(), "pure.json", pure);
    let out = run(&["broadcast-check", "--input", &g], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["broadcastable"], false);
    assert!(v.get("witness").is_none());
}

#[test]
fn tensor_check_needs_two_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pair.json", COMMUTING_PAIR);
    assert_eq!(run(&["tensor-check", "--input", &f], dir.path()).status.code(), Some(1));
    let out = run(&["tensor-check", "--input", &f, "--input", &f], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["product"]["product_dims"].as_array().unwrap().len(), 4);
    assert!(v["product"]["q_factorization_residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn verify_filters_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "products", "--sizes", "products=4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let results = v["results"].as_array().unwrap();
    assert!(!results.is_empty());
    assert!(results.iter().all(|r| r["suite"] == "products"));
}

#[test]
fn verify_flags_injected_bug() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "verify", "--suite", "minsuff", "--sizes", "expectation=2,probes=10", "--inject-bug",
            "--format", "text",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("[FAIL]") && l.contains("idempotence")), "{text}");
}

#[test]
fn verify_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "--suite", "fixtures,invariance", "--sizes", "invariance=2", "--seed", "5"];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_suite_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["verify", "--suite", "nope"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["verify", "--sizes", "planted=x"], dir.path()).status.code(), Some(1));
}
