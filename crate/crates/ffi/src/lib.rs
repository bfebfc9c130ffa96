//! C ABI over the evaudit library.
//!
//! Every function returns an [`EvStatus`]; results come back through out
//! parameters. On a non-zero status, [`ev_last_error`] describes the failure
//! for the calling thread. Handles are opaque and must be released with
//! their matching `_free` function. Strings returned to the caller are
//! released with [`ev_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use evaudit::aggregate::{pairwise_resolution, percent_of, performance_bounds, Bound, CellCounts, PairDecision};
use evaudit::checklist::{parse_predicate, read_lock, verify_lock, LockedChecklist, Predicate};
use evaudit::evaluator::{eval_predicate, BundleView, TriBool};
use evaudit::ledger::parse_ledger;
use evaudit::model::CellKey;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    ParseError = 4,
    IoError = 5,
    VerifyFailed = 6,
    Panic = 99,
}

/// Three-valued truth: and is min, or is max.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvTruth {
    False = 0,
    Undetermined = 1,
    True = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvPairDecision {
    LeftWins = 0,
    RightWins = 1,
    Unresolved = 2,
}

/// Exact bounds as reduced fractions.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvBound {
    pub lower_num: u64,
    pub lower_den: u64,
    pub upper_num: u64,
    pub upper_den: u64,
    pub width_num: u64,
    pub width_den: u64,
}

/// Parsed checklist predicate.
pub struct EvPredicate {
    inner: Predicate,
}

/// Locked checklist read from disk.
pub struct EvLock {
    inner: LockedChecklist,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (EvStatus, String);

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure (or panic) as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EvStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    (EvStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (EvStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

fn counts(p: u64, f: u64, u: u64) -> Result<CellCounts, Failure> {
    p.checked_add(f)
        .and_then(|s| s.checked_add(u))
        .ok_or((EvStatus::InvalidInput, "counts overflow".to_string()))?;
    Ok(CellCounts::new(CellKey::new("ffi", "ffi"), p, f, u))
}

fn bound(p: u64, f: u64, u: u64) -> Result<Bound, Failure> {
    performance_bounds(&counts(p, f, u)?).map_err(|e| (EvStatus::InvalidInput, e.to_string()))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ev_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ev_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bounds `[P/N, (P+U)/N]` and width `U/N` for one cell. Fails on N = 0.
///
/// # Safety
/// `out_bound` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_bounds(p: u64, f: u64, u: u64, out_bound: *mut EvBound) -> EvStatus {
    guard(|| {
        let slot = out(out_bound, "out_bound")?;
        let b = bound(p, f, u)?;
        let w = b.width();
        *slot = EvBound {
            lower_num: *b.lower.numer(),
            lower_den: *b.lower.denom(),
            upper_num: *b.upper.numer(),
            upper_den: *b.upper.denom(),
            width_num: *w.numer(),
            width_den: *w.denom(),
        };
        Ok(())
    })
}

/// `num/den` as a percentage with one decimal, rounded half up. The
/// string is released with [`ev_string_free`].
///
/// # Safety
/// `out_text` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_percent(num: u64, den: u64, out_text: *mut *mut c_char) -> EvStatus {
    guard(|| {
        let slot = out(out_text, "out_text")?;
        if den == 0 {
            return Err((EvStatus::InvalidInput, "zero denominator".into()));
        }
        *slot = CString::new(percent_of(num, den)).expect("no NUL").into_raw();
        Ok(())
    })
}

/// Strict-separation comparison of two cells given as P/F/U counts.
///
/// # Safety
/// `out_decision` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_pairwise(
    left_p: u64,
    left_f: u64,
    left_u: u64,
    right_p: u64,
    right_f: u64,
    right_u: u64,
    out_decision: *mut EvPairDecision,
) -> EvStatus {
    guard(|| {
        let slot = out(out_decision, "out_decision")?;
        let left = bound(left_p, left_f, left_u)?;
        let right = bound(right_p, right_f, right_u)?;
        *slot = match pairwise_resolution(&left, &right) {
            PairDecision::LeftWins => EvPairDecision::LeftWins,
            PairDecision::RightWins => EvPairDecision::RightWins,
            PairDecision::Unresolved => EvPairDecision::Unresolved,
        };
        Ok(())
    })
}

/// Parses predicate source text into a handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_predicate` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_predicate_parse(text: *const c_char, out_predicate: *mut *mut EvPredicate) -> EvStatus {
    guard(|| {
        let slot = out(out_predicate, "out_predicate")?;
        let text = str_arg(text, "text")?;
        let inner = parse_predicate(text).map_err(|e| (EvStatus::ParseError, e.to_string()))?;
        *slot = Box::into_raw(Box::new(EvPredicate { inner }));
        Ok(())
    })
}

/// Evaluates a predicate over structured artifacts given as a JSON object
/// mapping role to content. Absent roles evaluate as undetermined.
///
/// # Safety
/// `predicate` must be a live handle; `artifacts_json` a NUL-terminated
/// string; `out_truth` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_predicate_eval(
    predicate: *const EvPredicate,
    artifacts_json: *const c_char,
    out_truth: *mut EvTruth,
) -> EvStatus {
    guard(|| {
        let slot = out(out_truth, "out_truth")?;
        let pred = predicate.as_ref().ok_or_else(|| null("predicate"))?;
        let text = str_arg(artifacts_json, "artifacts_json")?;
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| (EvStatus::ParseError, format!("artifacts_json: {e}")))?;
        let serde_json::Value::Object(roles) = value else {
            return Err((EvStatus::InvalidInput, "artifacts_json must be an object".into()));
        };
        let view = roles
            .into_iter()
            .fold(BundleView::empty(), |view, (role, content)| view.with_json(&role, content));
        *slot = match eval_predicate(&pred.inner, &view) {
            TriBool::False => EvTruth::False,
            TriBool::Undetermined => EvTruth::Undetermined,
            TriBool::True => EvTruth::True,
        };
        Ok(())
    })
}

/// # Safety
/// `predicate` must be null or a handle from [`ev_predicate_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ev_predicate_free(predicate: *mut EvPredicate) {
    if !predicate.is_null() {
        drop(Box::from_raw(predicate));
    }
}

/// Reads a lock file. Parsing does not check the hash; see [`ev_lock_verify`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_lock` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_lock_open(path: *const c_char, out_lock: *mut *mut EvLock) -> EvStatus {
    guard(|| {
        let slot = out(out_lock, "out_lock")?;
        let path = str_arg(path, "path")?;
        let inner = read_lock(Path::new(path)).map_err(|e| {
            let status = match e {
                evaudit::checklist::ChecklistError::Io { .. } => EvStatus::IoError,
                _ => EvStatus::ParseError,
            };
            (status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(EvLock { inner }));
        Ok(())
    })
}

/// Recomputes the checklist hash. Returns `EV_STATUS_VERIFY_FAILED` when it
/// does not match the recorded lock hash.
///
/// # Safety
/// `lock` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ev_lock_verify(lock: *const EvLock) -> EvStatus {
    guard(|| {
        let lock = lock.as_ref().ok_or_else(|| null("lock"))?;
        if verify_lock(&lock.inner) {
            Ok(())
        } else {
            Err((
                EvStatus::VerifyFailed,
                format!("lock for {} does not match its checklist", lock.inner.case_label()),
            ))
        }
    })
}

/// Recorded lock hash as lowercase hex, released with [`ev_string_free`].
///
/// # Safety
/// `lock` must be a live handle; `out_hash` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_lock_hash(lock: *const EvLock, out_hash: *mut *mut c_char) -> EvStatus {
    guard(|| {
        let slot = out(out_hash, "out_hash")?;
        let lock = lock.as_ref().ok_or_else(|| null("lock"))?;
        *slot = CString::new(lock.inner.lock_hash.to_string()).expect("no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `lock` must be null or a handle from [`ev_lock_open`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ev_lock_free(lock: *mut EvLock) {
    if !lock.is_null() {
        drop(Box::from_raw(lock));
    }
}

/// Checks a ledger's hash chain and canonical form; reports the entry count.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_entries` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ev_ledger_verify(text: *const c_char, out_entries: *mut u64) -> EvStatus {
    guard(|| {
        let slot = out(out_entries, "out_entries")?;
        let text = str_arg(text, "text")?;
        let entries = parse_ledger(text).map_err(|e| (EvStatus::VerifyFailed, e.to_string()))?;
        *slot = entries.len() as u64;
        Ok(())
    })
}
