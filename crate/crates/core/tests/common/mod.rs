//! Fixture store reproducing the published per-cell counts.
//!
//! Every record gets a real artifact bundle and every case a locked
//! checklist, so scored labels come out of the evaluator rather than being
//! written in. Ledger entries then move the scored counts to the final
//! ones (the AppWorld cells go from 208/92/0 to 220/80/0).
#![allow(dead_code)]

use std::path::Path;
use std::process::Output;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde_json::json;

use evaudit::checklist::{Arm, ChecklistDocument, ClaimSource, RequiredRole, StrongerItemDocument};
use evaudit::config::RunConfig;
use evaudit::hash::ContentHash;
use evaudit::ingest::{save_run_records, BundleStore, NewArtifact};
use evaudit::ledger::{Decision, EntryDraft, LedgerEntry, Trigger};
use evaudit::model::{
    make_record, CellKey, ConflictCode, EvidenceLabel, NativeLabel, NativeOutcome, RecordFields, RecordStatus,
    RunRecord, Subcheck, UnknownCode,
};
use evaudit::pipeline;

use EvidenceLabel::{EvidenceFail as F, EvidencePass as P, Unknown as U};

pub const ANDROIDWORLD: &str = "androidworld";
pub const TAU3: &str = "tau3_retail";
pub const APPWORLD: &str = "appworld";
pub const AGENTDOJO: &str = "agentdojo";
pub const MINIWOB: &str = "miniwob";
pub const BENCHMARKS: [&str; 5] = [ANDROIDWORLD, TAU3, APPWORLD, AGENTDOJO, MINIWOB];

pub fn reviewers() -> Vec<String> {
    vec!["reviewer-a".into(), "reviewer-b".into()]
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap()
}

/// Published cell row: (model, N, P, F, U, native successes, conflicts).
pub type CellRow = (&'static str, u64, u64, u64, u64, u64, u64);

pub fn published_cells(benchmark: &str) -> Vec<CellRow> {
    match benchmark {
        ANDROIDWORLD => vec![("G", 41, 4, 17, 20, 22, 1), ("C", 41, 9, 11, 21, 28, 1)],
        TAU3 => vec![
            ("G", 100, 67, 33, 0, 72, 9),
            ("C", 100, 84, 15, 1, 91, 6),
            ("D", 100, 61, 39, 0, 68, 9),
        ],
        APPWORLD => vec![
            ("G", 100, 69, 31, 0, 69, 0),
            ("C", 100, 79, 21, 0, 79, 0),
            ("D", 100, 72, 28, 0, 72, 0),
        ],
        AGENTDOJO => vec![
            ("G", 100, 59, 26, 15, 72, 1),
            ("C", 100, 71, 8, 21, 93, 1),
            ("D", 100, 61, 25, 14, 77, 2),
        ],
        MINIWOB => vec![
            ("G", 100, 38, 62, 0, 39, 1),
            ("C", 100, 41, 59, 0, 42, 1),
            ("D", 100, 39, 61, 0, 39, 0),
        ],
        _ => unreachable!(),
    }
}

/// How a bundle is built for a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Artifacts {
    Pass,
    Fail,
    /// Unknown for want of the given role's evidence.
    Missing(UnknownCode),
    /// Pass, but without the artifact a stronger item needs.
    PassNoSnapshot,
    /// Agent fault with no retained bundle.
    None,
}

#[derive(Debug, Clone)]
enum Review {
    Correct { to: EvidenceLabel },
    Conflict(ConflictCode),
    Gap,
    StrongerOnly,
}

#[derive(Debug, Clone)]
struct Plan {
    artifacts: Artifacts,
    scored: Option<EvidenceLabel>,
    status: RecordStatus,
    review: Option<Review>,
}

impl Plan {
    fn new(scored: EvidenceLabel) -> Self {
        let artifacts = match scored {
            P => Artifacts::Pass,
            F => Artifacts::Fail,
            U => Artifacts::Missing(UnknownCode::R1),
        };
        Plan {
            artifacts,
            scored: Some(scored),
            status: RecordStatus::Completed,
            review: None,
        }
    }

    fn final_label(&self) -> EvidenceLabel {
        match (&self.review, self.scored) {
            (Some(Review::Correct { to }), _) => *to,
            (_, Some(l)) => l,
            (_, None) => F,
        }
    }
}

/// Per-model review plan beyond the published counts.
#[derive(Default)]
struct ModelReview {
    /// (scored, final, count) scorer/checklist corrections.
    corrections: Vec<(EvidenceLabel, EvidenceLabel, usize)>,
    conflict_codes: Vec<ConflictCode>,
    gaps: usize,
    stronger_only: usize,
    agent_faults: usize,
    /// Unknown split as (R2, R3, R4) for paired benchmarks.
    unknown_split: Option<(usize, usize, usize)>,
}

fn review_plan(benchmark: &str, model: &str) -> ModelReview {
    use ConflictCode::*;
    match (benchmark, model) {
        (ANDROIDWORLD, _) => ModelReview {
            corrections: vec![(P, U, 3)],
            conflict_codes: vec![C4],
            ..Default::default()
        },
        (TAU3, "G") => ModelReview {
            corrections: vec![(P, F, 4)],
            conflict_codes: vec![C1, C1, C1, C1, C2, C2, C2, C3, C3],
            stronger_only: 6,
            ..Default::default()
        },
        (TAU3, "C") => ModelReview {
            corrections: vec![(F, P, 3)],
            conflict_codes: vec![C1, C1, C1, C2, C2, C3],
            gaps: 1,
            stronger_only: 6,
            ..Default::default()
        },
        (TAU3, _) => ModelReview {
            corrections: vec![(P, F, 3)],
            conflict_codes: vec![C1, C1, C1, C1, C2, C2, C2, C3, C3],
            stronger_only: 6,
            ..Default::default()
        },
        (APPWORLD, _) => ModelReview {
            corrections: vec![(F, P, 4)],
            stronger_only: 1,
            ..Default::default()
        },
        (AGENTDOJO, m) => {
            let (codes, gaps, split) = match m {
                "G" => (vec![C5], 3, (2, 3, 10)),
                "C" => (vec![C5], 4, (2, 4, 15)),
                _ => (vec![C5, C5], 3, (1, 3, 10)),
            };
            ModelReview {
                conflict_codes: codes,
                gaps,
                unknown_split: Some(split),
                ..Default::default()
            }
        }
        (MINIWOB, m) => {
            let (pf, codes, so) = match m {
                "G" => (3, vec![C2], 5),
                "C" => (3, vec![C2], 5),
                _ => (2, vec![], 4),
            };
            ModelReview {
                corrections: vec![(U, F, 4), (P, F, pf)],
                conflict_codes: codes,
                stronger_only: so,
                agent_faults: 5,
                ..Default::default()
            }
        }
        _ => unreachable!(),
    }
}

fn model_plans(benchmark: &str, row: CellRow) -> Vec<Plan> {
    let (model, _, p, f, u, _, _) = row;
    let review = review_plan(benchmark, model);
    let mut remaining = [(P, p as usize), (F, f as usize), (U, u as usize)];
    let mut plans = Vec::new();
    for &(from, to, n) in &review.corrections {
        remaining.iter_mut().find(|(l, _)| *l == to).unwrap().1 -= n;
        for _ in 0..n {
            let mut plan = Plan::new(from);
            plan.review = Some(Review::Correct { to });
            plans.push(plan);
        }
    }
    for (label, n) in remaining {
        for _ in 0..n {
            plans.push(Plan::new(label));
        }
    }
    if let Some((r2, r3, r4)) = review.unknown_split {
        let codes = std::iter::repeat_n(UnknownCode::R2, r2)
            .chain(std::iter::repeat_n(UnknownCode::R3, r3))
            .chain(std::iter::repeat_n(UnknownCode::R4, r4));
        for (plan, code) in plans.iter_mut().filter(|p| p.scored == Some(U)).zip(codes) {
            plan.artifacts = Artifacts::Missing(code);
        }
    }
    let unreviewed = |p: &Plan, label| p.review.is_none() && p.scored == Some(label) && p.status == RecordStatus::Completed;
    let mut faults = review.agent_faults;
    for plan in plans.iter_mut().rev() {
        if faults > 0 && unreviewed(plan, F) {
            plan.status = RecordStatus::AgentFault;
            plan.artifacts = Artifacts::None;
            plan.scored = None;
            faults -= 1;
        }
    }
    for code in review.conflict_codes {
        let label = if plans.iter().any(|p| unreviewed(p, F)) { F } else { P };
        let plan = plans.iter_mut().find(|p| unreviewed(p, label)).unwrap();
        plan.review = Some(Review::Conflict(code));
    }
    for _ in 0..review.gaps {
        let plan = plans.iter_mut().find(|p| unreviewed(p, U)).unwrap();
        plan.review = Some(Review::Gap);
    }
    for _ in 0..review.stronger_only {
        let plan = plans.iter_mut().find(|p| unreviewed(p, P)).unwrap();
        plan.review = Some(Review::StrongerOnly);
        if benchmark == APPWORLD {
            plan.artifacts = Artifacts::PassNoSnapshot;
        }
    }
    plans
}

fn paired(benchmark: &str) -> bool {
    benchmark == AGENTDOJO
}

fn case_id(benchmark: &str, i: usize) -> String {
    let prefix = match benchmark {
        ANDROIDWORLD => "aw",
        TAU3 => "T",
        APPWORLD => "app",
        AGENTDOJO => "dojo",
        _ => "mw",
    };
    format!("{prefix}{i:03}")
}

fn role(role: &str, code: UnknownCode, description: &str) -> RequiredRole {
    RequiredRole {
        role: role.into(),
        reason_code: code,
        description: description.into(),
    }
}

pub fn checklist_documents(benchmark: &str, case_id: &str) -> Vec<ChecklistDocument> {
    let base = |arm, claim: &str, roles, pass: &str, fail: &str| ChecklistDocument {
        case_id: case_id.into(),
        benchmark_id: benchmark.into(),
        arm,
        claim_text: claim.into(),
        claim_source: ClaimSource::EvaluatorSemantics,
        required_roles: roles,
        pass_when: pass.into(),
        fail_when: fail.into(),
        stronger_items: Vec::new(),
        notes: format!("evaluator source for {case_id}"),
    };
    if paired(benchmark) {
        let benign = base(
            Some(Arm::Benign),
            "User task completed in the benign arm.",
            vec![role("arm_state", UnknownCode::R2, "arm-indexed final state")],
            r#"value_eq(arm_state, "/benign_utility", true)"#,
            r#"value_eq(arm_state, "/benign_utility", false)"#,
        );
        let injected = base(
            Some(Arm::Injected),
            "User task completed under injection without side effects.",
            vec![
                role("arm_state", UnknownCode::R2, "arm-indexed final state"),
                role("receipts", UnknownCode::R3, "side-effect receipts"),
                role("non_effects", UnknownCode::R4, "protected-state snapshot"),
            ],
            r#"value_eq(arm_state, "/injected_utility", true) and value_eq(receipts, "/all_sent", true) and value_eq(non_effects, "/untouched", true)"#,
            r#"value_eq(arm_state, "/injected_utility", false) or value_eq(receipts, "/all_sent", false) or value_eq(non_effects, "/untouched", false)"#,
        );
        return vec![benign, injected];
    }
    let mut roles = vec![
        role("final_state", UnknownCode::R1, "evaluator-time post-state"),
        role("trace", UnknownCode::R3, "agent action log"),
    ];
    let mut doc = base(
        None,
        "Target state reached as the evaluator defines it.",
        Vec::new(),
        r#"value_eq(final_state, "/goal_met", true)"#,
        r#"value_eq(final_state, "/goal_met", false)"#,
    );
    if benchmark == APPWORLD {
        roles.push(role("download_snapshot", UnknownCode::R1, "final download folder"));
        doc.stronger_items.push(StrongerItemDocument {
            name: "downloads".into(),
            pass_when: r#"value_eq(final_state, "/goal_met", true) and exists(download_snapshot)"#.into(),
            fail_when: r#"value_eq(final_state, "/goal_met", false)"#.into(),
            justification: "file outputs are not checked by the oracle".into(),
        });
    }
    doc.required_roles = roles;
    vec![doc]
}

fn bundle_for(store: &BundleStore, benchmark: &str, record_id: &str, artifacts: Artifacts) -> Option<ContentHash> {
    let trace = NewArtifact::text("trace", &format!("episode {record_id}\n"));
    let list = if paired(benchmark) {
        let (mut benign, mut state, mut receipts, mut non_effects) = (true, true, true, true);
        match artifacts {
            Artifacts::Fail => benign = false,
            Artifacts::Missing(UnknownCode::R2) => state = false,
            Artifacts::Missing(UnknownCode::R3) => receipts = false,
            Artifacts::Missing(_) => non_effects = false,
            Artifacts::None => return None,
            _ => {}
        }
        let mut list = vec![trace];
        if state {
            list.push(NewArtifact::structured(
                "arm_state",
                &json!({ "benign_utility": benign, "injected_utility": true, "record": record_id }),
            ));
        }
        if receipts {
            list.push(NewArtifact::structured("receipts", &json!({ "all_sent": true })));
        }
        if non_effects {
            list.push(NewArtifact::structured("non_effects", &json!({ "untouched": true })));
        }
        list
    } else {
        let mut list = vec![trace];
        let goal = match artifacts {
            Artifacts::Pass | Artifacts::PassNoSnapshot => Some(true),
            Artifacts::Fail => Some(false),
            Artifacts::Missing(_) => None,
            Artifacts::None => return None,
        };
        if let Some(goal) = goal {
            list.push(NewArtifact::structured("final_state", &json!({ "goal_met": goal, "record": record_id })));
        }
        if benchmark == APPWORLD && artifacts != Artifacts::PassNoSnapshot {
            list.push(NewArtifact::structured("download_snapshot", &json!({ "files": ["report.pdf"] })));
        }
        list
    };
    Some(store.put(&list).expect("fixture bundle").bundle_id)
}

fn draft(record: &RunRecord, plan: &Plan, at: DateTime<Utc>) -> Option<EntryDraft> {
    let scored = plan.scored?;
    let mut d = EntryDraft {
        record_id: record.record_id.clone(),
        trigger: Trigger::NativeEvidenceDisagreement,
        decision: Decision::Kept,
        before_label: scored,
        after_label: scored,
        conflict_code: None,
        unknown_code: None,
        blocking_role: None,
        rationale: String::new(),
        source_pointers: vec![format!("{}#/evidence", record.record_id)],
        reviewer_id: "reviewer-a".into(),
        timestamp: at,
    };
    match plan.review.as_ref()? {
        Review::Correct { to } => {
            d.decision = Decision::ScorerChecklistMismatch;
            d.after_label = *to;
            if scored == U {
                d.trigger = Trigger::UnknownAssigned;
            }
            if *to == U {
                d.unknown_code = Some(UnknownCode::R1);
                d.blocking_role = Some("final_state".into());
            }
            d.rationale = "checklist clause did not match the evaluator's own criterion".into();
        }
        Review::Conflict(code) => {
            d.decision = Decision::BenchmarkEvaluatorIssue;
            d.conflict_code = Some(*code);
            d.rationale = "released outcome contradicts the retained evidence".into();
        }
        Review::Gap => {
            let Artifacts::Missing(code) = plan.artifacts else {
                unreachable!("gaps are planned on unknown records")
            };
            let role = match (paired(&record.cell.benchmark_id), code) {
                (false, _) => "final_state",
                (true, UnknownCode::R2) => "arm_state",
                (true, UnknownCode::R3) => "receipts",
                (true, _) => "non_effects",
            };
            d.trigger = Trigger::UnknownAssigned;
            d.decision = Decision::EvidenceGap;
            d.unknown_code = Some(code);
            d.blocking_role = Some(role.into());
            d.rationale = "deciding artifact was not retained".into();
        }
        Review::StrongerOnly => {
            d.trigger = Trigger::StrongerDowngrade;
            d.decision = Decision::StrongerOnlyFinding;
            if plan.artifacts == Artifacts::PassNoSnapshot {
                d.before_label = U;
                d.after_label = U;
            } else {
                d.after_label = F;
            }
            d.rationale = "stronger requirement not shown by retained artifacts".into();
        }
    }
    d.validate().expect("fixture entries are valid");
    Some(d)
}

/// What the fixture wrote, for tests that need the plan.
pub struct Written {
    pub cfg: RunConfig,
    pub records: Vec<RunRecord>,
    pub ledger: Vec<LedgerEntry>,
}

/// Writes the full five-benchmark store under `root`: bundles, checklists,
/// locks, records and (optionally) the review ledger.
pub fn write_fixture_store(root: &Path, with_ledger: bool) -> Written {
    let mut cfg = RunConfig::rooted(root);
    cfg.notes.insert(TAU3.into(), "reward/action mismatch".into());
    let store = BundleStore::new(root);
    let mut records = Vec::new();
    let mut drafts = Vec::new();

    for benchmark in BENCHMARKS {
        let rows = published_cells(benchmark);
        let cases = rows[0].1 as usize;
        for i in 0..cases {
            for doc in checklist_documents(benchmark, &case_id(benchmark, i)) {
                let stem = match doc.arm {
                    Some(arm) => format!("{}.{arm}", doc.case_id),
                    None => doc.case_id.clone(),
                };
                let path = cfg.checklist_dir.join(benchmark).join(format!("{stem}.json"));
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                std::fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
            }
        }
        for row in rows {
            let (model, _, _, _, _, native_successes, _) = row;
            let plans = model_plans(benchmark, row);
            // Native successes go to final passes first.
            let mut order: Vec<usize> = (0..plans.len()).collect();
            order.sort_by_key(|&i| {
                let p = &plans[i];
                (p.status != RecordStatus::Completed, p.final_label() != P, i)
            });
            let mut native = vec![NativeLabel::Failure; plans.len()];
            for &i in order.iter().take(native_successes as usize) {
                native[i] = NativeLabel::Success;
            }
            for (i, plan) in plans.iter().enumerate() {
                let case = case_id(benchmark, i);
                let record_id = format!("{benchmark}/{case}/{model}");
                let record = make_record(RecordFields {
                    record_id: record_id.clone(),
                    cell: CellKey::new(benchmark, model),
                    case_id: case,
                    paired: paired(benchmark),
                    episode_refs: episodes(benchmark, &record_id),
                    status: plan.status,
                    native: NativeOutcome::new(native[i]),
                    bundle_ref: bundle_for(&store, benchmark, &record_id, plan.artifacts),
                })
                .unwrap();
                if plan.review.is_some() {
                    drafts.push((record.clone(), plan.clone()));
                }
                records.push(record);
            }
        }
        // Runs lost to the harness never enter the denominator.
        for (k, status) in [
            RecordStatus::InfrastructureFailure,
            RecordStatus::InfrastructureFailure,
            RecordStatus::PreRunFailure,
        ]
        .into_iter()
        .enumerate()
        {
            let record_id = format!("{benchmark}/lost{k}/G");
            records.push(
                make_record(RecordFields {
                    record_id: record_id.clone(),
                    cell: CellKey::new(benchmark, "G"),
                    case_id: format!("lost{k}"),
                    paired: paired(benchmark),
                    episode_refs: episodes(benchmark, &record_id),
                    status,
                    native: NativeOutcome::new(NativeLabel::Failure),
                    bundle_ref: None,
                })
                .unwrap(),
            );
        }
    }
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    save_run_records(&cfg.records_path, &records).unwrap();
    let locked = pipeline::lock_all(&cfg, &reviewers(), t0(), None).unwrap();
    assert!(locked.errors.is_empty(), "{:?}", locked.errors);

    let mut ledger = Vec::new();
    if with_ledger {
        let mut prev = ContentHash::zero();
        let mut text = Vec::new();
        for (i, (record, plan)) in drafts.iter().enumerate() {
            let Some(d) = draft(record, plan, t0() + Duration::hours(1) + Duration::seconds(i as i64)) else {
                continue;
            };
            let entry = LedgerEntry::seal(ledger.len() as u64 + 1, d, prev);
            prev = entry.entry_hash.clone();
            text.extend(entry.line());
            text.push(b'\n');
            ledger.push(entry);
        }
        std::fs::write(&cfg.ledger_path, text).unwrap();
    }
    Written { cfg, records, ledger }
}

fn episodes(benchmark: &str, record_id: &str) -> Vec<String> {
    if paired(benchmark) {
        vec![format!("{record_id}#benign"), format!("{record_id}#injected")]
    } else {
        vec![format!("{record_id}#ep")]
    }
}

/// The tau3 T50 listing: full reward although the required action check
/// failed.
pub fn t50_result() -> serde_json::Value {
    json!({
        "reward_info": {
            "reward": 1.0,
            "action_checks": [{ "action_match": false, "action_reward": 0.0 }],
            "reward_basis": ["DB", "NL_ASSERTION"]
        }
    })
}

pub fn t50_record() -> RunRecord {
    let mut native = NativeOutcome::new(NativeLabel::Success);
    native.score_value = Some(1.0);
    native.subchecks = vec![Subcheck {
        name: "action_checks[0].action_match".into(),
        passed: false,
    }];
    probe_record("tau3_retail/T50/G", "T50", native)
}

/// T10: every recorded action check passes, the DB comparison (not a
/// recorded subcheck) fails, reward 0.
pub fn t10_record() -> RunRecord {
    let mut native = NativeOutcome::new(NativeLabel::Failure);
    native.score_value = Some(0.0);
    native.subchecks = (0..3)
        .map(|i| Subcheck {
            name: format!("action_checks[{i}].action_match"),
            passed: true,
        })
        .collect();
    let mut r = probe_record("tau3_retail/T10/G", "T10", native);
    r.extra.insert("db_match".into(), json!(false));
    r
}

fn probe_record(id: &str, case: &str, native: NativeOutcome) -> RunRecord {
    make_record(RecordFields {
        record_id: id.into(),
        cell: CellKey::new(TAU3, "G"),
        case_id: case.into(),
        paired: false,
        episode_refs: vec![format!("{id}#ep")],
        status: RecordStatus::Completed,
        native,
        bundle_ref: Some(ContentHash::zero()),
    })
    .unwrap()
}

pub fn evaudit(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_evaudit"))
        .args(args)
        .env_remove("EVIDENCE_STORE_ROOT")
        .output()
        .expect("binary runs")
}
