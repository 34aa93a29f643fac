//! C ABI over `kidecomp`.
//!
//! Objects cross the boundary as opaque handles (`KdExperiment`,
//! `KdDecomposition`) created by `kd_*_from_json` / `kd_decompose` and
//! released with the matching `*_free`. Every fallible call returns a
//! [`KdStatus`]; on failure `kd_last_error_message` describes the error for
//! the calling thread. Strings returned through `char **` are owned by the
//! caller and must be released with `kd_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kidecomp::classical;
use kidecomp::experiment::StatisticalExperiment;
use kidecomp::linalg::Tolerance;
use kidecomp::minsuff;
use kidecomp::structure::{self, KIDecomposition};
use kidecomp::{Error, ErrorClass};

/// Status codes. The first four mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdStatus {
    Ok = 0,
    InputError = 1,
    NumericalError = 2,
    VerificationError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Numerical thresholds; see `kd_tolerance_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdTolerance {
    pub rank_cut: f64,
    pub residual: f64,
    pub cluster_gap: f64,
}

impl From<KdTolerance> for Tolerance {
    fn from(t: KdTolerance) -> Tolerance {
        Tolerance {
            rank_cut: t.rank_cut,
            residual: t.residual,
            cluster_gap: t.cluster_gap,
        }
    }
}

/// Opaque statistical experiment.
pub struct KdExperiment {
    inner: StatisticalExperiment,
}

/// Opaque decomposition result.
pub struct KdDecomposition {
    inner: KIDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> KdStatus {
    match err.class() {
        ErrorClass::Input => KdStatus::InputError,
        ErrorClass::Numerical => KdStatus::NumericalError,
        ErrorClass::Verification => KdStatus::VerificationError,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> KdStatus
where
    F: FnOnce() -> Result<(), KdFailure>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KdStatus::Ok,
        Ok(Err(KdFailure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            KdStatus::NullPointer
        }
        Ok(Err(KdFailure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            KdStatus::Panic
        }
    }
}

enum KdFailure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for KdFailure {
    fn from(e: Error) -> Self {
        KdFailure::Core(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, KdFailure> {
    p.as_ref().ok_or(KdFailure::Null(what))
}

unsafe fn tolerance(p: *const KdTolerance) -> Result<Tolerance, KdFailure> {
    let tol: Tolerance = match p.as_ref() {
        Some(t) => (*t).into(),
        None => Tolerance::default(),
    };
    tol.validate()?;
    Ok(tol)
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), KdFailure> {
    if out.is_null() {
        return Err(KdFailure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no interior nul").into_raw()
}

/// Default thresholds: rank_cut 1e-9, residual 1e-8, cluster_gap 1e-6.
#[no_mangle]
pub extern "C" fn kd_tolerance_default() -> KdTolerance {
    let t = Tolerance::default();
    KdTolerance {
        rank_cut: t.rank_cut,
        residual: t.residual,
        cluster_gap: t.cluster_gap,
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn kd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `kd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn kd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an experiment from its JSON document.
///
/// # Safety
/// `json` must be a valid nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_experiment_from_json(
    json: *const c_char,
    out: *mut *mut KdExperiment,
) -> KdStatus {
    guard(|| {
        if json.is_null() {
            return Err(KdFailure::Null("json"));
        }
        let s = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Error::InvalidInput(format!("json is not UTF-8: {e}")))?;
        let e = StatisticalExperiment::from_json_str(s)?;
        let handle = Box::into_raw(Box::new(KdExperiment { inner: e }));
        if out.is_null() {
            drop(Box::from_raw(handle));
            return Err(KdFailure::Null("out"));
        }
        out.write(handle);
        Ok(())
    })
}

/// # Safety
/// `e` must come from `kd_experiment_from_json` and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn kd_experiment_free(e: *mut KdExperiment) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Hilbert-space dimension of the experiment (0 for NULL).
///
/// # Safety
/// `e` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kd_experiment_dim(e: *const KdExperiment) -> usize {
    e.as_ref().map_or(0, |e| e.inner.dim)
}

/// Number of labels (0 for NULL).
///
/// # Safety
/// `e` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kd_experiment_num_labels(e: *const KdExperiment) -> usize {
    e.as_ref().map_or(0, |e| e.inner.num_labels())
}

/// Dimension of the minimal sufficient subalgebra. `tol` may be NULL for defaults.
///
/// # Safety
/// `e` must be a live handle; `tol` NULL or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_minimal_sufficient_dim(
    e: *const KdExperiment,
    tol: *const KdTolerance,
    out: *mut usize,
) -> KdStatus {
    guard(|| {
        let e = deref(e, "experiment")?;
        let tol = tolerance(tol)?;
        let (r, _) = kidecomp::experiment::restrict_to_joint_support(&e.inner, &tol)?;
        let m0 = minsuff::minimal_sufficient_algebra(&r, None, &tol)?;
        write_out(out, m0.dim(), "out")
    })
}

/// Computes the Koashi-Imoto decomposition. `tol` may be NULL for defaults.
///
/// # Safety
/// `e` must be a live handle; `tol` NULL or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_decompose(
    e: *const KdExperiment,
    tol: *const KdTolerance,
    seed: u64,
    out: *mut *mut KdDecomposition,
) -> KdStatus {
    guard(|| {
        let e = deref(e, "experiment")?;
        let tol = tolerance(tol)?;
        if out.is_null() {
            return Err(KdFailure::Null("out"));
        }
        let k = structure::ki_decomposition(&e.inner, &tol, seed)?;
        out.write(Box::into_raw(Box::new(KdDecomposition { inner: k })));
        Ok(())
    })
}

/// # Safety
/// `k` must come from `kd_decompose` and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn kd_decomposition_free(k: *mut KdDecomposition) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Number of blocks (0 for NULL).
///
/// # Safety
/// `k` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kd_decomposition_num_blocks(k: *const KdDecomposition) -> usize {
    k.as_ref().map_or(0, |k| k.inner.blocks.len())
}

/// Dimensions (n, m) of block `index`.
///
/// # Safety
/// `k` must be a live handle; `n` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_decomposition_block_dims(
    k: *const KdDecomposition,
    index: usize,
    n: *mut usize,
    m: *mut usize,
) -> KdStatus {
    guard(|| {
        let k = deref(k, "decomposition")?;
        let b = k.inner.blocks.get(index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "block index {index} out of range ({} blocks)",
                k.inner.blocks.len()
            ))
        })?;
        write_out(n, b.n, "n")?;
        write_out(m, b.m, "m")
    })
}

/// Decomposition JSON document. Release with `kd_string_free`.
///
/// # Safety
/// `k` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_decomposition_to_json(
    k: *const KdDecomposition,
    out: *mut *mut c_char,
) -> KdStatus {
    guard(|| {
        let k = deref(k, "decomposition")?;
        let s = serde_json::to_string(&k.inner.to_json()).map_err(Error::from)?;
        write_out(out, to_c_string(s), "out")
    })
}

/// Classical part as JSON `{"index": [...], "distributions": {label: [...]}}`.
///
/// # Safety
/// `k` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_classical_part_json(
    k: *const KdDecomposition,
    out: *mut *mut c_char,
) -> KdStatus {
    guard(|| {
        let k = deref(k, "decomposition")?;
        let cl = classical::classical_part(&k.inner);
        let s = serde_json::to_string(&cl.to_json()).map_err(Error::from)?;
        write_out(out, to_c_string(s), "out")
    })
}

/// Whether the experiment is broadcastable (every block has n = 1).
///
/// # Safety
/// `k` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_is_broadcastable(k: *const KdDecomposition, out: *mut bool) -> KdStatus {
    guard(|| {
        let k = deref(k, "decomposition")?;
        write_out(out, classical::is_broadcastable(&k.inner), "out")
    })
}

/// Verification report of `k` against `e` as JSON. Returns
/// `VerificationError` (with the report still written) when a check fails.
///
/// # Safety
/// `e`, `k` must be live handles; `tol` NULL or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kd_verify_json(
    e: *const KdExperiment,
    k: *const KdDecomposition,
    tol: *const KdTolerance,
    out: *mut *mut c_char,
) -> KdStatus {
    guard(|| {
        let e = deref(e, "experiment")?;
        let k = deref(k, "decomposition")?;
        let tol = tolerance(tol)?;
        let report = structure::verify_ki(&e.inner, &k.inner, &tol)?;
        let s = serde_json::to_string(&report).map_err(Error::from)?;
        write_out(out, to_c_string(s), "out")?;
        if report.passed {
            Ok(())
        } else {
            let failed: Vec<String> = report.failures().iter().map(|i| i.name.clone()).collect();
            Err(Error::VerificationFailed(format!("failed checks: {}", failed.join(", "))).into())
        }
    })
}
