//! Human adjudication: the review queue, the hash-chained ledger and the
//! application of its decisions to records.
//!
//! `ledger.jsonl` holds one entry per line in canonical JSON. Each entry
//! carries `prev_hash` (the previous entry's `entry_hash`, all zeros for the
//! first) and `entry_hash`, the SHA-256 of its own canonical form without
//! `entry_hash`. A line that is not byte-identical to the canonical form of
//! the entry it parses to is rejected, so whitespace edits are caught too.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::Rational;
use crate::evaluator::ConflictCandidate;
use crate::hash::{canonical_json, ContentHash};
use crate::model::{
    token_enum, Channel, ConflictCode, EvidenceAssignment, EvidenceLabel, FiredClause, NativeLabel, NativeOutcome,
    RunRecord, UnknownCode, UnknownReason,
};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("invalid entry field `{field}`: {message}")]
    InvalidEntry { field: &'static str, message: String },
    #[error("unknown record `{0}`")]
    UnknownRecord(String),
    #[error("record `{0}` was not scored under a valid checklist lock")]
    LockInvalid(String),
    #[error("conflicting entries for record `{0}` share a timestamp")]
    ConflictingEntries(String),
    #[error("ledger line {line}: {message}")]
    Chain { line: usize, message: String },
    #[error("sample rate {0} is outside [0, 1]")]
    InvalidSampleRate(Rational),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> LedgerError {
    LedgerError::InvalidEntry {
        field,
        message: message.into(),
    }
}

token_enum! {
    pub enum Trigger: "trigger" {
        NativeEvidenceDisagreement => "native_evidence_disagreement",
        UnknownAssigned => "unknown_assigned",
        StrongerDowngrade => "stronger_downgrade",
        SampledCheck => "sampled_check",
    }
}

token_enum! {
    pub enum Decision: "decision" {
        Kept => "kept",
        ScorerChecklistMismatch => "scorer_checklist_mismatch",
        BenchmarkEvaluatorIssue => "benchmark_evaluator_issue",
        EvidenceGap => "evidence_gap",
        StrongerOnlyFinding => "stronger_only_finding",
    }
}

/// A reviewer's decision before it is placed in the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryDraft {
    pub record_id: String,
    pub trigger: Trigger,
    pub decision: Decision,
    /// Native-aligned labels, or stronger-channel labels for
    /// `stronger_only_finding`.
    pub before_label: EvidenceLabel,
    pub after_label: EvidenceLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_code: Option<ConflictCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unknown_code: Option<UnknownCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocking_role: Option<String>,
    pub rationale: String,
    pub source_pointers: Vec<String>,
    pub reviewer_id: String,
    pub timestamp: DateTime<Utc>,
}

impl EntryDraft {
    /// Checks the entry invariants that need no other context.
    pub fn validate(&self) -> Result<(), LedgerError> {
        use Decision::*;
        if self.record_id.is_empty() {
            return Err(invalid("record_id", "must not be empty"));
        }
        if self.reviewer_id.trim().is_empty() {
            return Err(invalid("reviewer_id", "must not be empty"));
        }
        if self.rationale.trim().is_empty() {
            return Err(invalid("rationale", "must not be empty"));
        }
        if self.source_pointers.is_empty() || self.source_pointers.iter().any(|p| p.trim().is_empty()) {
            return Err(invalid("source_pointers", "at least one non-empty pointer is required"));
        }
        let changed = self.before_label != self.after_label;
        match self.decision {
            ScorerChecklistMismatch if !changed => {
                return Err(invalid("after_label", "a scorer/checklist correction must change the label"))
            }
            Kept | BenchmarkEvaluatorIssue | EvidenceGap if changed => {
                return Err(invalid("after_label", format!("`{}` must leave the label unchanged", self.decision)))
            }
            _ => {}
        }
        if (self.decision == BenchmarkEvaluatorIssue) != self.conflict_code.is_some() {
            return Err(invalid(
                "conflict_code",
                "required for benchmark_evaluator_issue and allowed only there",
            ));
        }
        if self.decision == EvidenceGap && self.after_label != EvidenceLabel::Unknown {
            return Err(invalid("after_label", "evidence_gap requires an unknown label"));
        }
        let needs_code = self.decision == EvidenceGap
            || (self.decision == ScorerChecklistMismatch && self.after_label == EvidenceLabel::Unknown);
        if needs_code != self.unknown_code.is_some() {
            return Err(invalid(
                "unknown_code",
                "required exactly when the decision leaves an unknown native label",
            ));
        }
        if self.blocking_role.is_some() && self.unknown_code.is_none() {
            return Err(invalid("blocking_role", "only meaningful with unknown_code"));
        }
        Ok(())
    }

    /// Equality ignoring the timestamp, used for idempotent resubmission.
    fn same_content(&self, other: &EntryDraft) -> bool {
        EntryDraft {
            timestamp: other.timestamp,
            ..self.clone()
        } == *other
    }
}

/// A chained ledger entry. Unknown fields are caught by the canonical-form
/// check in [`parse_ledger`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub entry_id: u64,
    #[serde(flatten)]
    pub draft: EntryDraft,
    pub prev_hash: ContentHash,
    pub entry_hash: ContentHash,
}

impl LedgerEntry {
    fn compute_hash(entry_id: u64, draft: &EntryDraft, prev_hash: &ContentHash) -> ContentHash {
        #[derive(Serialize)]
        struct Body<'a> {
            entry_id: u64,
            #[serde(flatten)]
            draft: &'a EntryDraft,
            prev_hash: &'a ContentHash,
        }
        ContentHash::of_canonical(&Body {
            entry_id,
            draft,
            prev_hash,
        })
    }

    pub fn seal(entry_id: u64, draft: EntryDraft, prev_hash: ContentHash) -> Self {
        let entry_hash = LedgerEntry::compute_hash(entry_id, &draft, &prev_hash);
        LedgerEntry {
            entry_id,
            draft,
            prev_hash,
            entry_hash,
        }
    }

    pub fn line(&self) -> Vec<u8> {
        canonical_json(self)
    }

    fn order_key(&self) -> (DateTime<Utc>, u64) {
        (self.draft.timestamp, self.entry_id)
    }
}

/// Checks ids, links, hashes and entry invariants from genesis.
pub fn verify_chain(entries: &[LedgerEntry]) -> Result<(), LedgerError> {
    let mut prev = ContentHash::zero();
    for (i, e) in entries.iter().enumerate() {
        let line = i + 1;
        let fail = |message: String| LedgerError::Chain { line, message };
        if e.entry_id != line as u64 {
            return Err(fail(format!("entry_id {} out of sequence", e.entry_id)));
        }
        if e.prev_hash != prev {
            return Err(fail("prev_hash does not link to the previous entry".into()));
        }
        if LedgerEntry::compute_hash(e.entry_id, &e.draft, &e.prev_hash) != e.entry_hash {
            return Err(fail("entry_hash does not match the entry".into()));
        }
        e.draft.validate().map_err(|err| fail(err.to_string()))?;
        prev = e.entry_hash.clone();
    }
    Ok(())
}

/// Parses and verifies ledger text.
pub fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>, LedgerError> {
    let mut entries = Vec::new();
    for (i, raw) in text.split_terminator('\n').enumerate() {
        let fail = |message: String| LedgerError::Chain { line: i + 1, message };
        let entry: LedgerEntry = serde_json::from_str(raw).map_err(|e| fail(e.to_string()))?;
        if entry.line() != raw.as_bytes() {
            return Err(fail("line is not in canonical form".into()));
        }
        entries.push(entry);
    }
    verify_chain(&entries)?;
    Ok(entries)
}

/// Result of an append.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub entry_id: u64,
    pub entry_hash: ContentHash,
    /// True when an identical entry already existed and nothing was written.
    pub duplicate: bool,
}

/// What an append is checked against.
#[derive(Debug, Clone, Copy)]
pub struct AppendContext<'a> {
    pub records: &'a BTreeMap<String, RunRecord>,
    /// Checklist hashes of verified locks; `None` skips the lock check.
    pub valid_checklists: Option<&'a BTreeSet<ContentHash>>,
}

/// Append-only `ledger.jsonl`.
#[derive(Debug, Clone)]
pub struct LedgerStore {
    path: PathBuf,
}

impl LedgerStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        LedgerStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Verified entries; a missing file is an empty ledger.
    pub fn load(&self) -> Result<Vec<LedgerEntry>, LedgerError> {
        match fs::read_to_string(&self.path) {
            Ok(text) => parse_ledger(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(source) => Err(LedgerError::Io {
                path: self.path.clone(),
                source,
            }),
        }
    }

    /// Validates and appends one entry. Callers serialize appends.
    pub fn append(&self, draft: EntryDraft, ctx: AppendContext<'_>) -> Result<Receipt, LedgerError> {
        let entries = self.load()?;
        let (entry, duplicate) = append_entry(&entries, draft, ctx)?;
        if !duplicate {
            let io = |source| LedgerError::Io {
                path: self.path.clone(),
                source,
            };
            if let Some(parent) = self.path.parent() {
                fs::create_dir_all(parent).map_err(io)?;
            }
            let mut line = entry.line();
            line.push(b'\n');
            let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
            file.write_all(&line).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        Ok(Receipt {
            entry_id: entry.entry_id,
            entry_hash: entry.entry_hash,
            duplicate,
        })
    }
}

/// Validates `draft` against the ledger so far and seals it. Returns the
/// existing entry and `true` for an identical resubmission.
pub fn append_entry(
    entries: &[LedgerEntry],
    draft: EntryDraft,
    ctx: AppendContext<'_>,
) -> Result<(LedgerEntry, bool), LedgerError> {
    draft.validate()?;
    let record = ctx
        .records
        .get(&draft.record_id)
        .ok_or_else(|| LedgerError::UnknownRecord(draft.record_id.clone()))?;
    if let (Some(valid), Some(evidence)) = (ctx.valid_checklists, &record.evidence) {
        if !valid.contains(&evidence.checklist_hash) {
            return Err(LedgerError::LockInvalid(record.record_id.clone()));
        }
    }
    if let Some(existing) = entries.iter().find(|e| e.draft.same_content(&draft)) {
        return Ok((existing.clone(), true));
    }
    let prev = entries.last().map_or_else(ContentHash::zero, |e| e.entry_hash.clone());
    Ok((LedgerEntry::seal(entries.len() as u64 + 1, draft, prev), false))
}

/// The latest entry among `group` by (timestamp, entry_id). Entries sharing
/// the latest timestamp must agree on `effect`.
fn latest<'a, K: PartialEq>(
    record_id: &str,
    group: &[&'a LedgerEntry],
    effect: impl Fn(&LedgerEntry) -> K,
) -> Result<Option<&'a LedgerEntry>, LedgerError> {
    let Some(last) = group.iter().copied().max_by_key(|e| e.order_key()) else {
        return Ok(None);
    };
    let clash = group
        .iter()
        .any(|e| e.draft.timestamp == last.draft.timestamp && effect(e) != effect(last));
    if clash {
        return Err(LedgerError::ConflictingEntries(record_id.to_string()));
    }
    Ok(Some(last))
}

fn fired_for(label: EvidenceLabel) -> FiredClause {
    match label {
        EvidenceLabel::EvidencePass => FiredClause::PassClause,
        EvidenceLabel::EvidenceFail => FiredClause::FailClause,
        EvidenceLabel::Unknown => FiredClause::Neither,
    }
}

fn correct_record(record: &mut RunRecord, entries: &[&LedgerEntry]) -> Result<(), LedgerError> {
    let id = record.record_id.clone();
    let of = |d: Decision| -> Vec<&LedgerEntry> { entries.iter().copied().filter(|e| e.draft.decision == d).collect() };

    if let Some(e) = latest(&id, &of(Decision::ScorerChecklistMismatch), |e| {
        (e.draft.after_label, e.draft.unknown_code, e.draft.blocking_role.clone())
    })? {
        let after = e.draft.after_label;
        let previous_role = record.unknown_reason().map(|r| r.blocking_role.clone());
        let evidence = record.evidence.get_or_insert_with(|| EvidenceAssignment {
            label: after,
            reason: None,
            fired_clause: fired_for(after),
            atom_outcomes: Vec::new(),
            checklist_hash: ContentHash::zero(),
            blocking_candidates: Vec::new(),
            corrected_by: None,
        });
        evidence.label = after;
        evidence.fired_clause = fired_for(after);
        evidence.reason = e.draft.unknown_code.map(|code| UnknownReason {
            code,
            blocking_role: e
                .draft
                .blocking_role
                .clone()
                .or(previous_role)
                .unwrap_or_else(|| "unspecified".into()),
        });
        evidence.corrected_by = Some(e.entry_id);
        record.channel_labels.insert(Channel::NativeAligned, after);
    }

    if let Some(e) = latest(&id, &of(Decision::EvidenceGap), |e| {
        (e.draft.unknown_code, e.draft.blocking_role.clone())
    })? {
        if let Some(evidence) = record.evidence.as_mut().filter(|ev| ev.label == EvidenceLabel::Unknown) {
            let code = e.draft.unknown_code.expect("validated evidence_gap carries a code");
            let role = e
                .draft
                .blocking_role
                .clone()
                .or_else(|| evidence.reason.as_ref().map(|r| r.blocking_role.clone()))
                .unwrap_or_else(|| "unspecified".into());
            evidence.reason = Some(UnknownReason {
                code,
                blocking_role: role,
            });
        }
    }

    if let Some(e) = latest(&id, &of(Decision::BenchmarkEvaluatorIssue), |e| e.draft.conflict_code)? {
        record.conflict = e.draft.conflict_code;
    }

    if let Some(e) = latest(&id, &of(Decision::StrongerOnlyFinding), |e| e.draft.after_label)? {
        record.channel_labels.insert(Channel::Stronger, e.draft.after_label);
    }
    Ok(())
}

/// Applies ledger decisions to records. Only records named by entries
/// change; native outcomes are never touched.
pub fn apply_corrections(records: &[RunRecord], ledger: &[LedgerEntry]) -> Result<Vec<RunRecord>, LedgerError> {
    let mut by_record: BTreeMap<&str, Vec<&LedgerEntry>> = BTreeMap::new();
    for e in ledger {
        by_record.entry(e.draft.record_id.as_str()).or_default().push(e);
    }
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(entries) = by_record.get(r.record_id.as_str()) {
                correct_record(&mut r, entries)?;
            }
            Ok(r)
        })
        .collect()
}

/// Review outcome for one benchmark.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub reviewed: usize,
    pub corrected: usize,
    /// Reviewed records by their final decision.
    pub by_decision: BTreeMap<Decision, usize>,
    /// Reviewed records per trigger that led to an entry.
    pub by_trigger: BTreeMap<Trigger, usize>,
}

/// Per-benchmark review counts. A record counts as corrected when its
/// latest entry is a scorer/checklist correction.
pub fn ledger_summary(ledger: &[LedgerEntry], records: &[RunRecord]) -> BTreeMap<String, ReviewSummary> {
    let benchmark: BTreeMap<&str, &str> = records
        .iter()
        .map(|r| (r.record_id.as_str(), r.cell.benchmark_id.as_str()))
        .collect();
    let mut by_record: BTreeMap<&str, Vec<&LedgerEntry>> = BTreeMap::new();
    for e in ledger {
        by_record.entry(e.draft.record_id.as_str()).or_default().push(e);
    }
    let mut out: BTreeMap<String, ReviewSummary> = BTreeMap::new();
    for (record_id, entries) in by_record {
        let Some(b) = benchmark.get(record_id) else {
            continue;
        };
        let summary = out.entry(b.to_string()).or_default();
        let last = entries.iter().max_by_key(|e| e.order_key()).expect("non-empty group");
        summary.reviewed += 1;
        if last.draft.decision == Decision::ScorerChecklistMismatch {
            summary.corrected += 1;
        }
        *summary.by_decision.entry(last.draft.decision).or_default() += 1;
        let triggers: BTreeSet<Trigger> = entries.iter().map(|e| e.draft.trigger).collect();
        for t in triggers {
            *summary.by_trigger.entry(t).or_default() += 1;
        }
    }
    out
}

/// One record waiting for review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueueItem {
    pub record_id: String,
    pub benchmark_id: String,
    pub model_id: String,
    pub case_id: String,
    pub triggers: BTreeSet<Trigger>,
    pub native: NativeOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceAssignment>,
    #[serde(default)]
    pub channel_labels: BTreeMap<Channel, EvidenceLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflict_candidates: Vec<ConflictCandidate>,
    #[serde(default)]
    pub claimed: Option<String>,
}

fn disagrees(record: &RunRecord) -> bool {
    matches!(
        (record.native.label, record.native_aligned_label()),
        (NativeLabel::Success, Some(EvidenceLabel::EvidenceFail)) | (NativeLabel::Failure, Some(EvidenceLabel::EvidencePass))
    )
}

fn triggers_for(record: &RunRecord, has_probe: bool) -> BTreeSet<Trigger> {
    let mut t = BTreeSet::new();
    if disagrees(record) || has_probe {
        t.insert(Trigger::NativeEvidenceDisagreement);
    }
    if record.native_aligned_label() == Some(EvidenceLabel::Unknown) {
        t.insert(Trigger::UnknownAssigned);
    }
    let downgraded = record.native_aligned_label() == Some(EvidenceLabel::EvidencePass)
        && matches!(
            record.channel_labels.get(&Channel::Stronger),
            Some(EvidenceLabel::EvidenceFail | EvidenceLabel::Unknown)
        );
    if downgraded {
        t.insert(Trigger::StrongerDowngrade);
    }
    t
}

/// Flags records for review. Exactly `floor(sample_rate · m)` of the `m`
/// unflagged records are added as sampled checks, drawn with a seeded
/// generator over sorted record ids. Records outside the denominator are
/// never queued.
pub fn build_review_queue(
    records: &[RunRecord],
    probe_findings: &[ConflictCandidate],
    sample_rate: Rational,
    seed: u64,
) -> Result<Vec<ReviewQueueItem>, LedgerError> {
    if sample_rate > Rational::from_integer(1) {
        return Err(LedgerError::InvalidSampleRate(sample_rate));
    }
    let mut probes: BTreeMap<&str, Vec<ConflictCandidate>> = BTreeMap::new();
    for p in probe_findings {
        probes.entry(p.record_id.as_str()).or_default().push(p.clone());
    }
    let mut eligible: Vec<&RunRecord> = records.iter().filter(|r| r.status.counts_in_denominator()).collect();
    eligible.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let mut items = Vec::new();
    let mut unflagged = Vec::new();
    for r in eligible {
        let candidates = probes.remove(r.record_id.as_str()).unwrap_or_default();
        let triggers = triggers_for(r, !candidates.is_empty());
        if triggers.is_empty() {
            unflagged.push(r);
        } else {
            items.push(queue_item(r, triggers, candidates));
        }
    }
    let k = (sample_rate * Rational::from_integer(unflagged.len() as u64)).to_integer() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in unflagged.choose_multiple(&mut rng, k) {
        items.push(queue_item(r, BTreeSet::from([Trigger::SampledCheck]), Vec::new()));
    }
    items.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(items)
}

fn queue_item(r: &RunRecord, triggers: BTreeSet<Trigger>, candidates: Vec<ConflictCandidate>) -> ReviewQueueItem {
    ReviewQueueItem {
        record_id: r.record_id.clone(),
        benchmark_id: r.cell.benchmark_id.clone(),
        model_id: r.cell.model_id.clone(),
        case_id: r.case_id.clone(),
        triggers,
        native: r.native.clone(),
        evidence: r.evidence.clone(),
        channel_labels: r.channel_labels.clone(),
        conflict_candidates: candidates,
        claimed: None,
    }
}
