use std::ffi::{CStr, CString};
use std::ptr;

use chrono::{TimeZone, Utc};

use evaudit::checklist::{CaseChecklist, ChecklistDocument, ClaimSource, LockStore, RequiredRole};
use evaudit::model::UnknownCode;
use evaudit_ffi::*;

fn last_error() -> String {
    let p = ev_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ev_string_free(p) };
    s
}

#[test]
fn bounds_are_reduced_fractions() {
    let mut b = EvBound::default();
    assert_eq!(unsafe { ev_bounds(13, 28, 41, &mut b) }, EvStatus::Ok);
    assert_eq!((b.lower_num, b.lower_den), (13, 82));
    assert_eq!((b.upper_num, b.upper_den), (27, 41));
    assert_eq!((b.width_num, b.width_den), (1, 2));
    assert!(ev_last_error().is_null());

    assert_eq!(unsafe { ev_bounds(0, 0, 0, &mut b) }, EvStatus::InvalidInput);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { ev_bounds(1, 0, 0, ptr::null_mut()) }, EvStatus::NullArgument);
    assert!(last_error().contains("out_bound"));
    assert_eq!(unsafe { ev_bounds(u64::MAX, 1, 0, &mut b) }, EvStatus::InvalidInput);
}

#[test]
fn percent_rounds_half_up() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ev_percent(13, 82, &mut s) }, EvStatus::Ok);
    assert_eq!(take(s), "15.9%");
    assert_eq!(unsafe { ev_percent(1, 2000, &mut s) }, EvStatus::Ok);
    assert_eq!(take(s), "0.1%");
    assert_eq!(unsafe { ev_percent(1, 0, &mut s) }, EvStatus::InvalidInput);
}

#[test]
fn pairwise_needs_strict_separation() {
    let mut d = EvPairDecision::Unresolved;
    assert_eq!(unsafe { ev_pairwise(84, 15, 1, 67, 33, 0, &mut d) }, EvStatus::Ok);
    assert_eq!(d, EvPairDecision::LeftWins);
    assert_eq!(unsafe { ev_pairwise(67, 33, 0, 84, 15, 1, &mut d) }, EvStatus::Ok);
    assert_eq!(d, EvPairDecision::RightWins);
    // [0.5, 0.6] and [0.6, 0.7] touch.
    assert_eq!(unsafe { ev_pairwise(5, 4, 1, 6, 3, 1, &mut d) }, EvStatus::Ok);
    assert_eq!(d, EvPairDecision::Unresolved);
}

#[test]
fn predicate_handles() {
    let src = CString::new(r#"value_eq(state, "/ok", true) and exists(log)"#).unwrap();
    let mut pred = ptr::null_mut();
    assert_eq!(unsafe { ev_predicate_parse(src.as_ptr(), &mut pred) }, EvStatus::Ok);
    let eval = |json: &str| {
        let json = CString::new(json).unwrap();
        let mut t = EvTruth::False;
        let status = unsafe { ev_predicate_eval(pred, json.as_ptr(), &mut t) };
        (status, t)
    };
    assert_eq!(eval(r#"{"state":{"ok":true},"log":"x"}"#), (EvStatus::Ok, EvTruth::True));
    assert_eq!(eval(r#"{"state":{"ok":true}}"#), (EvStatus::Ok, EvTruth::Undetermined));
    assert_eq!(eval(r#"{"state":{"ok":false}}"#), (EvStatus::Ok, EvTruth::False));
    assert_eq!(eval("[1]").0, EvStatus::InvalidInput);
    assert_eq!(eval("{").0, EvStatus::ParseError);
    unsafe { ev_predicate_free(pred) };

    let bad = CString::new("value_eq(state,").unwrap();
    let mut pred = ptr::null_mut();
    assert_eq!(unsafe { ev_predicate_parse(bad.as_ptr(), &mut pred) }, EvStatus::ParseError);
    assert!(pred.is_null());
    assert!(!last_error().is_empty());
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { ev_predicate_parse(invalid.as_ptr().cast(), &mut pred) },
        EvStatus::InvalidUtf8
    );
    unsafe { ev_predicate_free(ptr::null_mut()) };
}

fn write_lock(dir: &std::path::Path) -> std::path::PathBuf {
    let doc = ChecklistDocument {
        case_id: "c1".into(),
        benchmark_id: "bench".into(),
        arm: None,
        claim_text: "Goal reached.".into(),
        claim_source: ClaimSource::EvaluatorSemantics,
        required_roles: vec![RequiredRole {
            role: "state".into(),
            reason_code: UnknownCode::R1,
            description: String::new(),
        }],
        pass_when: r#"value_eq(state, "/ok", true)"#.into(),
        fail_when: r#"value_eq(state, "/ok", false)"#.into(),
        stronger_items: Vec::new(),
        notes: String::new(),
    };
    let store = LockStore::new(dir);
    let reviewers = ["a".to_string(), "b".to_string()];
    let at = Utc.with_ymd_and_hms(2026, 3, 1, 0, 0, 0).unwrap();
    store
        .lock(CaseChecklist::from_document(doc).unwrap(), &reviewers, at)
        .unwrap();
    store.path_for("bench", "c1", None)
}

#[test]
fn lock_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lock(dir.path());
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut lock = ptr::null_mut();
    assert_eq!(unsafe { ev_lock_open(c_path.as_ptr(), &mut lock) }, EvStatus::Ok);
    assert_eq!(unsafe { ev_lock_verify(lock) }, EvStatus::Ok);
    let mut hash = ptr::null_mut();
    assert_eq!(unsafe { ev_lock_hash(lock, &mut hash) }, EvStatus::Ok);
    let hash = take(hash);
    assert!(hash.len() == 64 && hash.bytes().all(|c| c.is_ascii_hexdigit()));
    unsafe { ev_lock_free(lock) };

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("Goal reached.", "Goal reached!")).unwrap();
    let mut lock = ptr::null_mut();
    assert_eq!(unsafe { ev_lock_open(c_path.as_ptr(), &mut lock) }, EvStatus::Ok);
    assert_eq!(unsafe { ev_lock_verify(lock) }, EvStatus::VerifyFailed);
    assert!(last_error().contains("bench"));
    unsafe { ev_lock_free(lock) };

    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ev_lock_open(missing.as_ptr(), &mut lock) }, EvStatus::IoError);
    assert_eq!(unsafe { ev_lock_verify(ptr::null()) }, EvStatus::NullArgument);
}

#[test]
fn ledger_verification() {
    let empty = CString::new("").unwrap();
    let mut n = 7;
    assert_eq!(unsafe { ev_ledger_verify(empty.as_ptr(), &mut n) }, EvStatus::Ok);
    assert_eq!(n, 0);
    let junk = CString::new("{\"entry_id\":1}\n").unwrap();
    assert_eq!(unsafe { ev_ledger_verify(junk.as_ptr(), &mut n) }, EvStatus::VerifyFailed);
}
