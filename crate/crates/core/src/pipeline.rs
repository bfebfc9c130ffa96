//! Pipeline stages behind the command line. Every stage reads and writes
//! files, so any stage can be re-run alone from persisted outputs.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! scored_records.jsonl    records with computed evidence, before review
//! assignments.jsonl       per-record evaluation detail and findings
//! probe_findings.jsonl    advisory conflict candidates
//! queue.json              review queue
//! corrected_records.jsonl records after ledger corrections
//! cells.json              corrected cell counts and bounds
//! report/                 rendered tables
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    cell_counts, leaderboard_claim, total_counts, AggregateError, CellCounts, CellSummary, Entrant, LeaderboardClaim,
};
use crate::checklist::{load_checklist_dir, verify_lock, Arm, ChecklistError, LockStore, LockedChecklist};
use crate::config::RunConfig;
use crate::evaluator::{
    evaluate_checklist, merge_paired_evaluations, paired_checklist_hash, probe_native_consistency, BundleView,
    ConflictCandidate, EvalError, EvalFinding, Evaluation,
};
use crate::hash::ContentHash;
use crate::ingest::{
    apply_denominator_rule, load_run_records, parse_run_records, save_run_records, validate_sampling_manifest,
    verify_bundle, write_jsonl, BundleStore, IngestError, SamplingManifest,
};
use crate::ledger::{
    apply_corrections, build_review_queue, ledger_summary, AppendContext, EntryDraft, LedgerEntry, LedgerError,
    LedgerStore, Receipt, ReviewQueueItem,
};
use crate::model::{CellKey, Channel, NativeLabel, RecordStatus, RunRecord};
use crate::report::{
    leaderboard_table, reason_breakdown, review_table, score_support_table, write_table, ReportError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Checklist(#[from] ChecklistError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cell {cell}: {source}")]
    Aggregate {
        cell: CellKey,
        #[source]
        source: AggregateError,
    },
    #[error("record `{record_id}`: {source}")]
    Eval {
        record_id: String,
        #[source]
        source: EvalError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn scored_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("scored_records.jsonl")
}
pub fn assignments_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("assignments.jsonl")
}
pub fn probes_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("probe_findings.jsonl")
}
pub fn queue_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("queue.json")
}
pub fn corrected_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("corrected_records.jsonl")
}
pub fn cells_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("cells.json")
}
pub fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("report")
}
pub fn manifests_dir(cfg: &RunConfig) -> PathBuf {
    cfg.store_root.join("manifests")
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_vec_pretty(value).expect("outputs serialize");
    text.push(b'\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Malformed {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Reads persisted records; a missing file is no records.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, PipelineError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(parse_run_records(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn keep_benchmark(records: Vec<RunRecord>, benchmark: Option<&str>) -> Vec<RunRecord> {
    match benchmark {
        Some(b) => records.into_iter().filter(|r| r.cell.benchmark_id == b).collect(),
        None => records,
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub included: usize,
    pub excluded: BTreeMap<RecordStatus, usize>,
}

/// Loads `input` (default: the configured records file), checks bundle
/// references and writes the records, sorted by id, to `records_path`.
pub fn ingest(cfg: &RunConfig, input: Option<&Path>) -> Result<IngestSummary, PipelineError> {
    let store = BundleStore::new(&cfg.store_root);
    let input = input.unwrap_or(&cfg.records_path);
    let mut records = load_run_records(input, &store)?;
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    save_run_records(&cfg.records_path, &records)?;
    let total = records.len();
    let partition = apply_denominator_rule(records);
    let mut excluded = BTreeMap::new();
    for (_, status) in &partition.excluded {
        *excluded.entry(*status).or_default() += 1;
    }
    Ok(IngestSummary {
        records: total,
        included: partition.included.len(),
        excluded,
    })
}

// ---------------------------------------------------------------- validate

/// Problems found by `validate`; empty means every check passed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checked: BTreeMap<&'static str, usize>,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks sampling manifests, artifact bundles, checklist locks and the
/// ledger chain.
pub fn validate(cfg: &RunConfig) -> Result<ValidationReport, PipelineError> {
    let mut report = ValidationReport::default();
    let store = BundleStore::new(&cfg.store_root);

    let records = if cfg.records_path.exists() {
        match load_run_records(&cfg.records_path, &store) {
            Ok(r) => r,
            Err(e) => {
                report.problems.push(format!("records: {e}"));
                Vec::new()
            }
        }
    } else {
        Vec::new()
    };
    report.checked.insert("records", records.len());

    let mut manifests = 0;
    if let Ok(dir) = fs::read_dir(manifests_dir(cfg)) {
        let mut paths: Vec<PathBuf> = dir.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
        paths.sort();
        for path in paths {
            manifests += 1;
            let result = SamplingManifest::load(&path).and_then(|m| {
                let mine: Vec<RunRecord> =
                    records.iter().filter(|r| r.cell.benchmark_id == m.benchmark_id).cloned().collect();
                validate_sampling_manifest(&m, &mine)
            });
            match result {
                Ok(r) if r.is_consistent() => {}
                Ok(r) => {
                    for (case, model) in r.missing {
                        report.problems.push(format!("{}: no record for case `{case}`, model `{model}`", path.display()));
                    }
                    for id in r.unselected {
                        report.problems.push(format!("{}: record `{id}` is for an unselected case", path.display()));
                    }
                    for (cell, case) in r.duplicates {
                        report.problems.push(format!("{}: duplicate records for {cell}, case `{case}`", path.display()));
                    }
                }
                Err(e) => report.problems.push(format!("{}: {e}", path.display())),
            }
        }
    }
    report.checked.insert("manifests", manifests);

    let bundle_ids: BTreeSet<&ContentHash> = records.iter().filter_map(|r| r.bundle_ref.as_ref()).collect();
    report.checked.insert("bundles", bundle_ids.len());
    for id in bundle_ids {
        match store.load(id) {
            Ok(bundle) => {
                let r = verify_bundle(&bundle, &cfg.store_root);
                for f in r.findings {
                    report
                        .problems
                        .push(format!("bundle {id}: {}", serde_json::to_string(&f).expect("findings serialize")));
                }
            }
            Err(e) => report.problems.push(format!("bundle {id}: {e}")),
        }
    }

    let locks = LockStore::new(&cfg.lock_dir).load_all()?;
    report.checked.insert("locks", locks.len());
    for (path, lock) in locks {
        match lock {
            Ok(l) if verify_lock(&l) => {}
            Ok(l) => report.problems.push(format!(
                "lock for case {} does not verify ({})",
                l.case_label(),
                path.display()
            )),
            Err(e) => report.problems.push(e.to_string()),
        }
    }

    match LedgerStore::new(&cfg.ledger_path).load() {
        Ok(entries) => {
            report.checked.insert("ledger entries", entries.len());
        }
        Err(e) => report.problems.push(format!("ledger {}: {e}", cfg.ledger_path.display())),
    }
    Ok(report)
}

// ---------------------------------------------------------------- lock

#[derive(Debug, Default)]
pub struct LockOutcome {
    pub locked: Vec<LockedChecklist>,
    pub errors: Vec<String>,
}

/// Locks every checklist under `checklist_dir` (optionally one benchmark).
/// Re-locking unchanged content is a no-op.
pub fn lock_all(
    cfg: &RunConfig,
    reviewers: &[String],
    locked_at: DateTime<Utc>,
    benchmark: Option<&str>,
) -> Result<LockOutcome, PipelineError> {
    let store = LockStore::new(&cfg.lock_dir);
    let mut out = LockOutcome::default();
    for (path, checklist) in load_checklist_dir(&cfg.checklist_dir)? {
        let checklist = match checklist {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        if benchmark.is_some_and(|b| b != checklist.benchmark_id()) {
            continue;
        }
        match store.lock(checklist, reviewers, locked_at) {
            Ok(l) => out.locked.push(l),
            Err(e) => out.errors.push(e.to_string()),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- score

/// Evaluation detail for one record, persisted to `assignments.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentDetail {
    pub record_id: String,
    pub evaluated: bool,
    #[serde(default)]
    pub findings: Vec<EvalFinding>,
}

/// A case whose lock is missing or fails verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedCase {
    pub case: String,
    pub reason: String,
    pub records: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteCell {
    pub cell: CellKey,
    pub message: String,
}

/// Contents of `cells.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellsReport {
    pub cells: Vec<CellSummary>,
    pub benchmarks: Vec<CellSummary>,
    #[serde(default)]
    pub incomplete: Vec<IncompleteCell>,
}

/// Cells and benchmark totals over denominator-counting records. Cells
/// holding unscored records are listed as incomplete instead.
pub fn cells_report(records: &[RunRecord]) -> CellsReport {
    let mut by_cell: BTreeMap<&CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.counts_in_denominator()) {
        by_cell.entry(&r.cell).or_default().push(r);
    }
    let mut out = CellsReport::default();
    let mut per_benchmark: BTreeMap<String, Vec<CellCounts>> = BTreeMap::new();
    for (cell, rs) in by_cell {
        match cell_counts(cell, &rs) {
            Ok(c) => {
                per_benchmark.entry(cell.benchmark_id.clone()).or_default().push(c.clone());
                out.cells.push(CellSummary::new(c));
            }
            Err(e) => out.incomplete.push(IncompleteCell {
                cell: cell.clone(),
                message: e.to_string(),
            }),
        }
    }
    for (b, cells) in per_benchmark {
        out.benchmarks.push(CellSummary::new(total_counts(CellKey::new(b, ""), &cells)));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOutcome {
    pub scored: Vec<RunRecord>,
    pub corrected: Vec<RunRecord>,
    pub details: Vec<AssignmentDetail>,
    pub probes: Vec<ConflictCandidate>,
    pub queue: Vec<ReviewQueueItem>,
    pub cells: CellsReport,
    pub blocked: Vec<BlockedCase>,
}

type LockKey = (String, String, Option<Arm>);

/// Loads and verifies the locks a record set needs. A lock that is absent
/// maps to `Ok(None)`; one that fails to load or verify maps to `Err`.
fn load_locks(
    store: &LockStore,
    records: &[RunRecord],
) -> BTreeMap<LockKey, Result<Option<LockedChecklist>, String>> {
    let mut keys = BTreeSet::new();
    for r in records {
        let (b, c) = (r.cell.benchmark_id.clone(), r.case_id.clone());
        keys.insert((b.clone(), c.clone(), None));
        if r.paired {
            keys.insert((b.clone(), c.clone(), Some(Arm::Benign)));
            keys.insert((b, c, Some(Arm::Injected)));
        }
    }
    keys.into_iter()
        .map(|k| {
            let loaded = match store.load(&k.0, &k.1, k.2) {
                Ok(Some(l)) if verify_lock(&l) => Ok(Some(l)),
                Ok(Some(l)) => Err(format!("lock for case {} does not verify", l.case_label())),
                Ok(None) => Ok(None),
                Err(e) => Err(e.to_string()),
            };
            (k, loaded)
        })
        .collect()
}

enum Plan<'a> {
    Single(&'a LockedChecklist),
    Paired(&'a LockedChecklist, &'a LockedChecklist),
}

fn plan_for<'a>(
    r: &RunRecord,
    locks: &'a BTreeMap<LockKey, Result<Option<LockedChecklist>, String>>,
) -> Result<Plan<'a>, (String, String)> {
    let key = |arm| (r.cell.benchmark_id.clone(), r.case_id.clone(), arm);
    let case = format!("{}/{}", r.cell.benchmark_id, r.case_id);
    let get = |arm: Option<Arm>| match locks.get(&key(arm)) {
        Some(Ok(l)) => Ok(l.as_ref()),
        Some(Err(e)) => Err(e.clone()),
        None => Ok(None),
    };
    let blocked = |reason: String| (case.clone(), reason);
    if r.paired {
        let b = get(Some(Arm::Benign)).map_err(blocked)?;
        let i = get(Some(Arm::Injected)).map_err(blocked)?;
        match (b, i) {
            (Some(b), Some(i)) => return Ok(Plan::Paired(b, i)),
            (None, None) => {}
            (Some(_), None) => return Err(blocked("benign arm is locked but the injected arm is not".into())),
            (None, Some(_)) => return Err(blocked("injected arm is locked but the benign arm is not".into())),
        }
    }
    match get(None).map_err(blocked)? {
        Some(l) => Ok(Plan::Single(l)),
        None => Err(blocked("no locked checklist".into())),
    }
}

enum Scored {
    Done(RunRecord, AssignmentDetail),
    Blocked(String, String, String),
}

fn score_record(
    r: &RunRecord,
    store: &BundleStore,
    locks: &BTreeMap<LockKey, Result<Option<LockedChecklist>, String>>,
) -> Result<Scored, PipelineError> {
    let skip = || {
        Scored::Done(
            r.clone(),
            AssignmentDetail {
                record_id: r.record_id.clone(),
                evaluated: false,
                findings: Vec::new(),
            },
        )
    };
    if !r.status.counts_in_denominator() {
        return Ok(skip());
    }
    // An agent fault that left no bundle and failed natively is a plain F.
    if r.bundle_ref.is_none() && r.native.label == NativeLabel::Failure {
        return Ok(skip());
    }
    let plan = match plan_for(r, locks) {
        Ok(p) => p,
        Err((case, reason)) => return Ok(Scored::Blocked(case, reason, r.record_id.clone())),
    };
    let view = match &r.bundle_ref {
        Some(id) => BundleView::load(store, &store.load(id)?),
        None => BundleView::empty(),
    };
    let eval_err = |source| PipelineError::Eval {
        record_id: r.record_id.clone(),
        source,
    };
    let evaluation: Evaluation = match plan {
        Plan::Single(l) => evaluate_checklist(l, &view).map_err(eval_err)?,
        Plan::Paired(b, i) => merge_paired_evaluations(
            evaluate_checklist(b, &view).map_err(eval_err)?,
            evaluate_checklist(i, &view).map_err(eval_err)?,
        ),
    };
    let mut out = r.clone();
    out.channel_labels.clear();
    out.channel_labels.insert(Channel::NativeAligned, evaluation.assignment.label);
    if let Some(s) = evaluation.stronger {
        out.channel_labels.insert(Channel::Stronger, s);
    }
    out.evidence = Some(evaluation.assignment);
    Ok(Scored::Done(
        out,
        AssignmentDetail {
            record_id: r.record_id.clone(),
            evaluated: true,
            findings: evaluation.findings,
        },
    ))
}

/// Evaluates every record against its locked checklist, runs the
/// consistency probe, builds the review queue, applies the ledger and
/// writes all stage outputs. Cases with a missing or invalid lock are
/// reported in `blocked` and their records stay unscored.
pub fn score(cfg: &RunConfig, benchmark: Option<&str>) -> Result<ScoreOutcome, PipelineError> {
    let store = BundleStore::new(&cfg.store_root);
    let mut records = keep_benchmark(load_run_records(&cfg.records_path, &store)?, benchmark);
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let locks = load_locks(&LockStore::new(&cfg.lock_dir), &records);

    let results: Vec<Scored> = records
        .par_iter()
        .map(|r| score_record(r, &store, &locks))
        .collect::<Result<_, _>>()?;

    let mut out = ScoreOutcome::default();
    let mut blocked: BTreeMap<String, BlockedCase> = BTreeMap::new();
    for (result, original) in results.into_iter().zip(&records) {
        match result {
            Scored::Done(r, d) => {
                out.scored.push(r);
                out.details.push(d);
            }
            Scored::Blocked(case, reason, id) => {
                blocked
                    .entry(case.clone())
                    .or_insert_with(|| BlockedCase {
                        case,
                        reason,
                        records: Vec::new(),
                    })
                    .records
                    .push(id.clone());
                let mut r = original.clone();
                r.evidence = None;
                r.channel_labels.clear();
                out.scored.push(r);
                out.details.push(AssignmentDetail {
                    record_id: id,
                    evaluated: false,
                    findings: Vec::new(),
                });
            }
        }
    }
    out.blocked = blocked.into_values().collect();
    out.probes = out
        .scored
        .iter()
        .filter(|r| r.status.counts_in_denominator())
        .flat_map(probe_native_consistency)
        .collect();
    out.queue = build_review_queue(&out.scored, &out.probes, cfg.sample_rate, cfg.seed)?;

    save_run_records(&scored_path(cfg), &out.scored)?;
    write_jsonl(&assignments_path(cfg), &out.details)?;
    write_jsonl(&probes_path(cfg), &out.probes)?;
    write_json(&queue_path(cfg), &out.queue)?;
    let (corrected, cells) = apply(cfg)?;
    out.corrected = corrected;
    out.cells = cells;
    Ok(out)
}

// ---------------------------------------------------------------- adjudicate

/// Applies the ledger to the persisted scored records and writes the
/// corrected records and `cells.json`. Re-running gives identical bytes.
pub fn apply(cfg: &RunConfig) -> Result<(Vec<RunRecord>, CellsReport), PipelineError> {
    let scored = read_records(&scored_path(cfg))?;
    let ledger = LedgerStore::new(&cfg.ledger_path).load()?;
    let corrected = apply_corrections(&scored, &ledger)?;
    save_run_records(&corrected_path(cfg), &corrected)?;
    let cells = cells_report(&corrected);
    write_json(&cells_path(cfg), &cells)?;
    Ok((corrected, cells))
}

/// Checklist hashes an entry may refer to: every verified lock, plus the
/// merged hash of each verified benign/injected pair.
pub fn valid_checklist_hashes(cfg: &RunConfig) -> Result<BTreeSet<ContentHash>, PipelineError> {
    let mut valid = BTreeSet::new();
    let mut arms: BTreeMap<(String, String), [Option<ContentHash>; 2]> = BTreeMap::new();
    for (_, lock) in LockStore::new(&cfg.lock_dir).load_all()? {
        let Ok(lock) = lock else { continue };
        if !verify_lock(&lock) {
            continue;
        }
        let c = &lock.checklist;
        let slot = arms.entry((c.benchmark_id().to_string(), c.case_id().to_string())).or_default();
        match c.arm() {
            Some(Arm::Benign) => slot[0] = Some(lock.lock_hash.clone()),
            Some(Arm::Injected) => slot[1] = Some(lock.lock_hash.clone()),
            None => {}
        }
        valid.insert(lock.lock_hash);
    }
    for [b, i] in arms.into_values() {
        if let (Some(b), Some(i)) = (b, i) {
            valid.insert(paired_checklist_hash(&b, &i));
        }
    }
    Ok(valid)
}

/// Appends one reviewed decision to the ledger.
pub fn append(cfg: &RunConfig, draft: EntryDraft) -> Result<Receipt, PipelineError> {
    let scored = read_records(&scored_path(cfg))?;
    let records: BTreeMap<String, RunRecord> = scored.into_iter().map(|r| (r.record_id.clone(), r)).collect();
    let valid = valid_checklist_hashes(cfg)?;
    let ctx = AppendContext {
        records: &records,
        valid_checklists: Some(&valid),
    };
    Ok(LedgerStore::new(&cfg.ledger_path).append(draft, ctx)?)
}

pub fn read_queue(cfg: &RunConfig) -> Result<Vec<ReviewQueueItem>, PipelineError> {
    let path = queue_path(cfg);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_json(&path)
}

pub fn read_details(cfg: &RunConfig) -> Result<Vec<AssignmentDetail>, PipelineError> {
    let path = assignments_path(cfg);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl(&path)
}

pub fn read_probes(cfg: &RunConfig) -> Result<Vec<ConflictCandidate>, PipelineError> {
    let path = probes_path(cfg);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl(&path)
}

// ---------------------------------------------------------------- report / rank

/// Corrected records if `adjudicate apply` or `score` has run, else the
/// scored records, else none.
pub fn reporting_records(cfg: &RunConfig, benchmark: Option<&str>) -> Result<Vec<RunRecord>, PipelineError> {
    let corrected = corrected_path(cfg);
    let path = if corrected.exists() { corrected } else { scored_path(cfg) };
    Ok(keep_benchmark(read_records(&path)?, benchmark))
}

fn complete_cells(records: &[RunRecord]) -> Result<Vec<CellCounts>, PipelineError> {
    let mut by_cell: BTreeMap<&CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.counts_in_denominator()) {
        by_cell.entry(&r.cell).or_default().push(r);
    }
    by_cell
        .into_iter()
        .map(|(cell, rs)| {
            cell_counts(cell, &rs).map_err(|source| PipelineError::Aggregate {
                cell: cell.clone(),
                source,
            })
        })
        .collect()
}

/// Leaderboard claims for every benchmark with at least two models that
/// is not excluded by configuration.
pub fn rank(cfg: &RunConfig, benchmark: Option<&str>) -> Result<Vec<LeaderboardClaim>, PipelineError> {
    let records = reporting_records(cfg, benchmark)?;
    claims_for(cfg, &complete_cells(&records)?)
}

fn claims_for(cfg: &RunConfig, cells: &[CellCounts]) -> Result<Vec<LeaderboardClaim>, PipelineError> {
    let mut by_benchmark: BTreeMap<&str, Vec<Entrant>> = BTreeMap::new();
    for c in cells {
        if cfg.excluded_benchmarks_from_leaderboard.contains(&c.cell.benchmark_id) {
            continue;
        }
        let entrant = Entrant::from_counts(c).map_err(|source| PipelineError::Aggregate {
            cell: c.cell.clone(),
            source,
        })?;
        by_benchmark.entry(c.cell.benchmark_id.as_str()).or_default().push(entrant);
    }
    Ok(by_benchmark
        .into_iter()
        .filter(|(_, e)| e.len() >= 2)
        .map(|(b, e)| leaderboard_claim(b, &e).expect("two or more entrants"))
        .collect())
}

/// All report tables, as written to `output_dir/report`.
#[derive(Debug, Clone, Default)]
pub struct Reports {
    pub score_support: Vec<crate::report::ScoreSupportRow>,
    pub leaderboard: Vec<crate::report::LeaderboardRow>,
    pub reasons: Vec<crate::report::ReasonRow>,
    pub review: Vec<crate::report::ReviewRow>,
}

pub fn report(cfg: &RunConfig, benchmark: Option<&str>) -> Result<Reports, PipelineError> {
    let records = reporting_records(cfg, benchmark)?;
    let cells = complete_cells(&records)?;
    let ledger: Vec<LedgerEntry> = LedgerStore::new(&cfg.ledger_path).load()?;
    let reports = Reports {
        score_support: score_support_table(&cells, &cfg.notes),
        leaderboard: leaderboard_table(&claims_for(cfg, &cells)?),
        reasons: reason_breakdown(&records),
        review: review_table(&ledger_summary(&ledger, &records)),
    };
    let dir = report_dir(cfg);
    write_table(&dir, &reports.score_support)?;
    write_table(&dir, &reports.leaderboard)?;
    write_table(&dir, &reports.reasons)?;
    write_table(&dir, &reports.review)?;
    Ok(reports)
}
