use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use kidecomp_ffi::*;

const PAIR: &str = r#"{"dim": 2, "labels": ["a", "b"], "states": {
  "a": {"rows": 2, "cols": 2, "re": [[0.5, 0.0], [0.0, 0.5]], "im": [[0.0, 0.0], [0.0, 0.0]]},
  "b": {"rows": 2, "cols": 2, "re": [[0.3333333333333333, 0.0], [0.0, 0.6666666666666666]], "im": [[0.0, 0.0], [0.0, 0.0]]}}}"#;

const PURE_PAIR: &str = r#"{"dim": 2, "labels": ["zero", "plus"], "states": {
  "zero": {"rows": 2, "cols": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]},
  "plus": {"rows": 2, "cols": 2, "re": [[0.5, 0.5], [0.5, 0.5]], "im": [[0.0, 0.0], [0.0, 0.0]]}}}"#;

fn experiment(json: &str) -> *mut KdExperiment {
    let c = CString::new(json).unwrap();
    let mut e = ptr::null_mut();
    let st = unsafe { kd_experiment_from_json(c.as_ptr(), &mut e) };
    assert_eq!(st, KdStatus::Ok, "{:?}", last_error());
    e
}

fn last_error() -> Option<String> {
    let p = kd_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { kd_string_free(p) };
    s
}

#[test]
fn commuting_pair_round_trip() {
    let e = experiment(PAIR);
    unsafe {
        assert_eq!(kd_experiment_dim(e), 2);
        assert_eq!(kd_experiment_num_labels(e), 2);
        let mut dim = 0;
        assert_eq!(kd_minimal_sufficient_dim(e, ptr::null(), &mut dim), KdStatus::Ok);
        assert_eq!(dim, 2);

        let tol = kd_tolerance_default();
        let mut k = ptr::null_mut();
        assert_eq!(kd_decompose(e, &tol, 0, &mut k), KdStatus::Ok);
        assert_eq!(kd_decomposition_num_blocks(k), 2);
        for i in 0..2 {
            let (mut n, mut m) = (0, 0);
            assert_eq!(kd_decomposition_block_dims(k, i, &mut n, &mut m), KdStatus::Ok);
            assert_eq!((n, m), (1, 1));
        }
        let (mut n, mut m) = (0, 0);
        assert_eq!(kd_decomposition_block_dims(k, 2, &mut n, &mut m), KdStatus::InputError);
        assert!(last_error().unwrap().contains("out of range"));

        let mut b = false;
        assert_eq!(kd_is_broadcastable(k, &mut b), KdStatus::Ok);
        assert!(b);

        let mut s = ptr::null_mut();
        assert_eq!(kd_classical_part_json(k, &mut s), KdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
        let a: Vec<f64> = serde_json::from_value(v["distributions"]["a"].clone()).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|p| (p - 0.5).abs() < 1e-12));

        assert_eq!(kd_decomposition_to_json(k, &mut s), KdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
        assert_eq!(v["blocks"].as_array().unwrap().len(), 2);

        assert_eq!(kd_verify_json(e, k, ptr::null(), &mut s), KdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
        assert_eq!(v["passed"], true);

        kd_decomposition_free(k);
        kd_experiment_free(e);
    }
}

#[test]
fn pure_pair_is_not_broadcastable() {
    let e = experiment(PURE_PAIR);
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(kd_decompose(e, ptr::null(), 1, &mut k), KdStatus::Ok);
        let mut b = true;
        assert_eq!(kd_is_broadcastable(k, &mut b), KdStatus::Ok);
        assert!(!b);
        let (mut n, mut m) = (0, 0);
        assert_eq!(kd_decomposition_block_dims(k, 0, &mut n, &mut m), KdStatus::Ok);
        assert_eq!((n, m), (2, 1));
        kd_decomposition_free(k);
        kd_experiment_free(e);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let bad = CString::new("{\"dim\": 2").unwrap();
        let mut e = ptr::null_mut();
        assert_eq!(kd_experiment_from_json(bad.as_ptr(), &mut e), KdStatus::InputError);
        assert!(e.is_null());
        assert!(last_error().is_some());

        assert_eq!(kd_experiment_from_json(ptr::null(), &mut e), KdStatus::NullPointer);
        let good = CString::new(PAIR).unwrap();
        assert_eq!(kd_experiment_from_json(good.as_ptr(), ptr::null_mut()), KdStatus::NullPointer);

        let e = experiment(PAIR);
        assert_eq!(last_error(), None, "success clears the error");
        let mut k = ptr::null_mut();
        let coarse = KdTolerance { rank_cut: 0.5, ..kd_tolerance_default() };
        assert_eq!(kd_decompose(e, &coarse, 0, &mut k), KdStatus::NumericalError);
        assert!(k.is_null());
        let invalid = KdTolerance { residual: -1.0, ..kd_tolerance_default() };
        assert_eq!(kd_decompose(e, &invalid, 0, &mut k), KdStatus::InputError);
        assert_eq!(kd_decompose(ptr::null(), ptr::null(), 0, &mut k), KdStatus::NullPointer);
        assert_eq!(kd_decomposition_num_blocks(ptr::null()), 0);
        kd_experiment_free(e);
        kd_experiment_free(ptr::null_mut());
        kd_decomposition_free(ptr::null_mut());
        kd_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(kd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let t = kd_tolerance_default();
    assert_eq!((t.rank_cut, t.residual, t.cluster_gap), (1e-9, 1e-8, 1e-6));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("kidecomp.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "kd_experiment_from_json",
        "kd_experiment_free",
        "kd_decompose",
        "kd_decomposition_free",
        "kd_decomposition_block_dims",
        "kd_classical_part_json",
        "kd_is_broadcastable",
        "kd_verify_json",
        "kd_last_error_message",
        "kd_string_free",
        "typedef struct KdExperiment KdExperiment",
        "KD_STATUS_NUMERICAL_ERROR = 2",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping link test");
        return;
    };
    // target/<profile>/deps/<test-binary> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libkidecomp_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("c_smoke");
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("c_smoke.c");
    let status = std::process::Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "blocks=2 broadcastable=1 verify=0");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
