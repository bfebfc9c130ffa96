//! Shared vocabulary: labels, statuses, reason and conflict taxonomies,
//! record identity and the cell key used for aggregation.
//!
//! Every enum here has a stable lower_snake_case string encoding which is
//! what appears in `records.jsonl`, checklists, ledgers and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::evaluator::TriBool;
use crate::hash::ContentHash;

/// Current `schema_version` written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid record field `{field}`: {message}")]
    InvalidRecord { field: String, message: String },
    #[error("unknown {kind} token `{token}`")]
    UnknownToken { kind: &'static str, token: String },
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::InvalidRecord {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Declares a closed enum with a bijective string encoding.
macro_rules! token_enum {
    (
        $(#[$meta:meta])*
        $vis:vis enum $name:ident : $kind:literal {
            $( $(#[$vmeta:meta])* $variant:ident => $token:literal ),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        $vis enum $name {
            $( $(#[$vmeta])* $variant ),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[ $( $name::$variant ),+ ];

            pub const fn as_str(self) -> &'static str {
                match self {
                    $( $name::$variant => $token ),+
                }
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::model::ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $token => Ok($name::$variant), )+
                    other => Err($crate::model::ModelError::UnknownToken { kind: $kind, token: other.to_string() }),
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::serde::Serialize for $name {
            fn serialize<S: ::serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> ::serde::Deserialize<'de> for $name {
            fn deserialize<D: ::serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = <String as ::serde::Deserialize>::deserialize(deserializer)?;
                raw.parse().map_err(<D::Error as ::serde::de::Error>::custom)
            }
        }
    };
}
pub(crate) use token_enum;

token_enum! {
    /// Three-state evidence label. There is no fourth state.
    pub enum EvidenceLabel: "evidence label" {
        EvidencePass => "evidence_pass",
        EvidenceFail => "evidence_fail",
        Unknown => "unknown",
    }
}

impl EvidenceLabel {
    /// Rank under Fail < Unknown < Pass, used when merging paired arms.
    pub const fn support_rank(self) -> u8 {
        match self {
            EvidenceLabel::EvidenceFail => 0,
            EvidenceLabel::Unknown => 1,
            EvidenceLabel::EvidencePass => 2,
        }
    }
}

token_enum! {
    /// The benchmark's released binary label.
    pub enum NativeLabel: "native label" {
        Success => "success",
        Failure => "failure",
    }
}

token_enum! {
    /// Execution status of a record.
    ///
    /// `AgentFault` covers post-start timeouts, invalid actions, tool misuse,
    /// malformed final answers and benchmark-facing aborts. It stays in the
    /// denominator.
    pub enum RecordStatus: "record status" {
        Completed => "completed",
        AgentFault => "agent_fault",
        InfrastructureFailure => "infrastructure_failure",
        PreRunFailure => "pre_run_failure",
    }
}

impl RecordStatus {
    pub const fn counts_in_denominator(self) -> bool {
        matches!(self, RecordStatus::Completed | RecordStatus::AgentFault)
    }
}

token_enum! {
    /// Primary blocking reason for an Unknown record.
    pub enum UnknownCode: "unknown reason" {
        /// No authoritative post-state for the target object.
        R1 => "r1",
        /// Paired-arm comparability gap.
        R2 => "r2",
        /// Missing side-effect log or receipt.
        R3 => "r3",
        /// Missing non-effect evidence.
        R4 => "r4",
    }
}

token_enum! {
    /// Benchmark-conflict type.
    pub enum ConflictCode: "conflict type" {
        /// Required subcheck ignored by the reported score.
        C1 => "c1",
        /// Proxy accepts wrong state or action.
        C2 => "c2",
        /// Internal success criteria disagree.
        C3 => "c3",
        /// Target-set construction error.
        C4 => "c4",
        /// Task requirement omitted from the oracle.
        C5 => "c5",
    }
}

token_enum! {
    /// Reporting channel. The stronger channel never feeds the main bounds.
    pub enum Channel: "channel" {
        NativeAligned => "native_aligned",
        Stronger => "stronger",
    }
}

token_enum! {
    pub enum FiredClause: "fired clause" {
        FailClause => "fail_clause",
        PassClause => "pass_clause",
        Neither => "neither",
    }
}

/// One primary blocking reason plus the artifact role that blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnknownReason {
    pub code: UnknownCode,
    pub blocking_role: String,
}

/// Aggregation key: one agent on one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub benchmark_id: String,
    pub model_id: String,
}

impl CellKey {
    pub fn new(benchmark_id: impl Into<String>, model_id: impl Into<String>) -> Self {
        CellKey {
            benchmark_id: benchmark_id.into(),
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.benchmark_id.is_empty() {
            return Err(ModelError::invalid("cell.benchmark_id", "must be non-empty"));
        }
        if self.model_id.is_empty() {
            return Err(ModelError::invalid("cell.model_id", "must be non-empty"));
        }
        Ok(())
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.benchmark_id, self.model_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcheck {
    pub name: String,
    pub passed: bool,
}

/// What the native evaluator released for a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeOutcome {
    pub label: NativeLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_value: Option<f64>,
    #[serde(default)]
    pub subchecks: Vec<Subcheck>,
}

impl NativeOutcome {
    pub fn new(label: NativeLabel) -> Self {
        NativeOutcome {
            label,
            score_value: None,
            subchecks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some(score) = self.score_value {
            if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                return Err(ModelError::invalid(
                    "native.score_value",
                    format!("{score} is outside [0, 1]"),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for check in &self.subchecks {
            if !seen.insert(check.name.as_str()) {
                return Err(ModelError::invalid(
                    "native.subchecks",
                    format!("duplicate subcheck name `{}`", check.name),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one predicate atom during evidence assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomOutcome {
    pub atom_index: usize,
    /// Which clause the atom belongs to, e.g. `fail_when` or `injected:pass_when`.
    pub clause: String,
    pub atom: String,
    pub outcome: TriBool,
    pub source_pointer: String,
}

/// A role that blocked a decision, with its position in `required_roles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingCandidate {
    pub role: String,
    pub code: UnknownCode,
    pub priority: usize,
}

/// The evidence view of one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceAssignment {
    pub label: EvidenceLabel,
    #[serde(default)]
    pub reason: Option<UnknownReason>,
    pub fired_clause: FiredClause,
    #[serde(default)]
    pub atom_outcomes: Vec<AtomOutcome>,
    pub checklist_hash: ContentHash,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocking_candidates: Vec<BlockingCandidate>,
    /// Ledger entry that last overrode the computed label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_by: Option<u64>,
}

impl EvidenceAssignment {
    pub fn validate(&self) -> Result<(), ModelError> {
        let unknown = self.label == EvidenceLabel::Unknown;
        if unknown != self.reason.is_some() {
            return Err(ModelError::invalid(
                "evidence.reason",
                "reason must be present exactly when the label is unknown",
            ));
        }
        if unknown != (self.fired_clause == FiredClause::Neither) {
            return Err(ModelError::invalid(
                "evidence.fired_clause",
                "fired_clause must be `neither` exactly when the label is unknown",
            ));
        }
        Ok(())
    }
}

/// One agent's result on one case unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub record_id: String,
    pub cell: CellKey,
    pub case_id: String,
    /// Paired-arm case units carry two episodes (benign and injected).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paired: bool,
    pub episode_refs: Vec<String>,
    pub status: RecordStatus,
    pub native: NativeOutcome,
    #[serde(default)]
    pub bundle_ref: Option<ContentHash>,
    #[serde(default)]
    pub evidence: Option<EvidenceAssignment>,
    #[serde(default)]
    pub channel_labels: BTreeMap<Channel, EvidenceLabel>,
    /// Confirmed benchmark conflict (ledger-attached only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict: Option<ConflictCode>,
    /// Adapter-specific fields, preserved verbatim.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Raw fields for [`make_record`].
#[derive(Debug, Clone)]
pub struct RecordFields {
    pub record_id: String,
    pub cell: CellKey,
    pub case_id: String,
    pub paired: bool,
    pub episode_refs: Vec<String>,
    pub status: RecordStatus,
    pub native: NativeOutcome,
    pub bundle_ref: Option<ContentHash>,
}

/// Builds a validated record with no evidence and empty channel labels.
pub fn make_record(fields: RecordFields) -> Result<RunRecord, ModelError> {
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        record_id: fields.record_id,
        cell: fields.cell,
        case_id: fields.case_id,
        paired: fields.paired,
        episode_refs: fields.episode_refs,
        status: fields.status,
        native: fields.native,
        bundle_ref: fields.bundle_ref,
        evidence: None,
        channel_labels: BTreeMap::new(),
        conflict: None,
        extra: Map::new(),
    };
    record.validate()?;
    Ok(record)
}

impl RunRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.record_id.is_empty() {
            return Err(ModelError::invalid("record_id", "must be non-empty"));
        }
        self.cell.validate()?;
        if self.case_id.is_empty() {
            return Err(ModelError::invalid("case_id", "must be non-empty"));
        }
        let expected = if self.paired { 2 } else { 1 };
        if self.episode_refs.len() != expected {
            return Err(ModelError::invalid(
                "episode_refs",
                format!(
                    "expected {expected} episode reference(s), found {}",
                    self.episode_refs.len()
                ),
            ));
        }
        if self.episode_refs.iter().any(String::is_empty) {
            return Err(ModelError::invalid("episode_refs", "empty episode reference"));
        }
        if self.status == RecordStatus::Completed && self.bundle_ref.is_none() {
            return Err(ModelError::invalid(
                "bundle_ref",
                "completed records must reference an artifact bundle",
            ));
        }
        self.native.validate()?;
        if let Some(evidence) = &self.evidence {
            evidence.validate()?;
            if !self.channel_labels.contains_key(&Channel::NativeAligned) {
                return Err(ModelError::invalid(
                    "channel_labels",
                    "records with evidence need a native_aligned label",
                ));
            }
        }
        Ok(())
    }

    /// The label that feeds the main bounds, if any.
    pub fn native_aligned_label(&self) -> Option<EvidenceLabel> {
        self.channel_labels.get(&Channel::NativeAligned).copied()
    }

    pub fn evidence_label(&self) -> Option<EvidenceLabel> {
        self.evidence.as_ref().map(|e| e.label)
    }

    pub fn unknown_reason(&self) -> Option<&UnknownReason> {
        self.evidence.as_ref().and_then(|e| e.reason.as_ref())
    }
}
