//! Case checklists: the claim under test, the artifact roles that decide it,
//! and three-valued pass/fail predicates over those roles.

mod lock;
pub mod predicate;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{canonical_json, ContentHash};
use crate::model::{token_enum, ModelError, UnknownCode};

pub use lock::{lock_checklist, read_lock, verify_lock, LockStore, LockedChecklist};
pub use predicate::{parse_predicate, Atom, Literal, Predicate, SyntaxError};

#[derive(Debug, Error)]
pub enum ChecklistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed checklist document: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("case {case_id}: `{field}`: {source}")]
    Syntax {
        case_id: String,
        field: String,
        #[source]
        source: SyntaxError,
    },
    #[error("case {case_id}: predicate references undeclared role `{role}`")]
    UndeclaredRole { case_id: String, role: String },
    #[error("case {case_id}: claim_source `{source_tier}` needs a note explaining why evaluator semantics do not decide")]
    HierarchyViolation { case_id: String, source_tier: ClaimSource },
    #[error("case {case_id}: role `{role}` declared more than once")]
    DuplicateRole { case_id: String, role: String },
    #[error("case {case_id}: required_roles is empty")]
    NoRequiredRoles { case_id: String },
    #[error("case {case_id}: {message}")]
    Invalid { case_id: String, message: String },
    #[error("locking needs at least two distinct reviewers, got {0}")]
    InsufficientReviewers(usize),
    #[error("case {case}: a different checklist is already locked at {path}")]
    LockConflict { case: String, path: PathBuf },
    #[error("case {case}: lock hash does not match checklist contents")]
    LockInvalid { case: String },
}

token_enum! {
    /// Source tier of the claim, highest applicable first.
    pub enum ClaimSource: "claim source" {
        EvaluatorSemantics => "evaluator_semantics",
        TaskTextPolicy => "task_text_policy",
        Schema => "schema",
    }
}

token_enum! {
    /// Arm of a paired-arm case unit.
    pub enum Arm: "arm" {
        Benign => "benign",
        Injected => "injected",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredRole {
    pub role: String,
    pub reason_code: UnknownCode,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongerItemDocument {
    pub name: String,
    pub pass_when: String,
    pub fail_when: String,
    pub justification: String,
}

/// On-disk form of a checklist. Predicates are kept as source text so the
/// lock hash covers exactly what reviewers signed off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistDocument {
    pub case_id: String,
    pub benchmark_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
    pub claim_text: String,
    pub claim_source: ClaimSource,
    /// Order is semantic: earlier roles win Unknown-reason ties.
    pub required_roles: Vec<RequiredRole>,
    pub pass_when: String,
    pub fail_when: String,
    #[serde(default)]
    pub stronger_items: Vec<StrongerItemDocument>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrongerItem {
    pub name: String,
    pub pass_when: Predicate,
    pub fail_when: Predicate,
    pub justification: String,
}

/// Non-fatal findings about a checklist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lint {
    pub case_id: String,
    pub message: String,
}

/// A validated checklist with parsed predicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChecklistDocument", into = "ChecklistDocument")]
pub struct CaseChecklist {
    document: ChecklistDocument,
    pass_when: Predicate,
    fail_when: Predicate,
    stronger_items: Vec<StrongerItem>,
    lints: Vec<Lint>,
}

impl From<CaseChecklist> for ChecklistDocument {
    fn from(c: CaseChecklist) -> Self {
        c.document
    }
}

impl TryFrom<ChecklistDocument> for CaseChecklist {
    type Error = ChecklistError;

    fn try_from(document: ChecklistDocument) -> Result<Self, Self::Error> {
        CaseChecklist::from_document(document)
    }
}

impl CaseChecklist {
    pub fn from_document(document: ChecklistDocument) -> Result<Self, ChecklistError> {
        let case_id = document.case_id.clone();
        if case_id.is_empty() || document.benchmark_id.is_empty() {
            return Err(ChecklistError::Invalid {
                case_id,
                message: "case_id and benchmark_id must be non-empty".into(),
            });
        }
        if document.required_roles.is_empty() {
            return Err(ChecklistError::NoRequiredRoles { case_id });
        }
        let mut declared = BTreeSet::new();
        for r in &document.required_roles {
            if !declared.insert(r.role.as_str()) {
                return Err(ChecklistError::DuplicateRole {
                    case_id,
                    role: r.role.clone(),
                });
            }
        }
        if document.claim_source != ClaimSource::EvaluatorSemantics && document.notes.trim().is_empty() {
            return Err(ChecklistError::HierarchyViolation {
                case_id,
                source_tier: document.claim_source,
            });
        }

        let parse = |field: &str, text: &str| {
            parse_predicate(text).map_err(|source| ChecklistError::Syntax {
                case_id: case_id.clone(),
                field: field.to_string(),
                source,
            })
        };
        let pass_when = parse("pass_when", &document.pass_when)?;
        let fail_when = parse("fail_when", &document.fail_when)?;
        let mut stronger_items = Vec::with_capacity(document.stronger_items.len());
        for item in &document.stronger_items {
            stronger_items.push(StrongerItem {
                name: item.name.clone(),
                pass_when: parse(&format!("stronger_items[{}].pass_when", item.name), &item.pass_when)?,
                fail_when: parse(&format!("stronger_items[{}].fail_when", item.name), &item.fail_when)?,
                justification: item.justification.clone(),
            });
        }

        let all = [&pass_when, &fail_when]
            .into_iter()
            .chain(stronger_items.iter().flat_map(|s| [&s.pass_when, &s.fail_when]));
        let mut referenced = BTreeSet::new();
        for pred in all {
            for role in pred.roles() {
                if !declared.contains(role) {
                    return Err(ChecklistError::UndeclaredRole {
                        case_id,
                        role: role.to_string(),
                    });
                }
                referenced.insert(role.to_string());
            }
        }

        let mut lints = Vec::new();
        for item in &stronger_items {
            if item.pass_when == pass_when {
                lints.push(Lint {
                    case_id: case_id.clone(),
                    message: format!(
                        "stronger item `{}` duplicates the native pass_when predicate",
                        item.name
                    ),
                });
            }
        }
        for r in &document.required_roles {
            if !referenced.contains(&r.role) {
                lints.push(Lint {
                    case_id: case_id.clone(),
                    message: format!("required role `{}` is not referenced by any predicate", r.role),
                });
            }
        }

        Ok(CaseChecklist {
            document,
            pass_when,
            fail_when,
            stronger_items,
            lints,
        })
    }

    pub fn document(&self) -> &ChecklistDocument {
        &self.document
    }

    pub fn case_id(&self) -> &str {
        &self.document.case_id
    }

    pub fn benchmark_id(&self) -> &str {
        &self.document.benchmark_id
    }

    pub fn arm(&self) -> Option<Arm> {
        self.document.arm
    }

    pub fn required_roles(&self) -> &[RequiredRole] {
        &self.document.required_roles
    }

    pub fn pass_when(&self) -> &Predicate {
        &self.pass_when
    }

    pub fn fail_when(&self) -> &Predicate {
        &self.fail_when
    }

    pub fn stronger_items(&self) -> &[StrongerItem] {
        &self.stronger_items
    }

    pub fn lints(&self) -> &[Lint] {
        &self.lints
    }

    /// `<case_id>` or `<case_id>.<arm>`; the file stem used in the stores.
    pub fn stem(&self) -> String {
        checklist_stem(&self.document.case_id, self.document.arm)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_json(&self.document)
    }

    pub fn content_hash(&self) -> ContentHash {
        ContentHash::of_bytes(&self.canonical_bytes())
    }
}

pub fn checklist_stem(case_id: &str, arm: Option<Arm>) -> String {
    match arm {
        Some(arm) => format!("{case_id}.{arm}"),
        None => case_id.to_string(),
    }
}

/// Reads and validates one checklist document.
pub fn parse_checklist(path: &Path) -> Result<CaseChecklist, ChecklistError> {
    let bytes = fs::read(path).map_err(|source| ChecklistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let document: ChecklistDocument =
        serde_json::from_slice(&bytes).map_err(|e| ChecklistError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    CaseChecklist::from_document(document)
}

/// Loads every `<dir>/<benchmark>/<stem>.json`, sorted by path.
///
/// Each file must live under its own benchmark directory and be named after
/// its case (and arm, for paired cases).
pub fn load_checklist_dir(dir: &Path) -> Result<Vec<(PathBuf, Result<CaseChecklist, ChecklistError>)>, ChecklistError> {
    let mut out = Vec::new();
    for path in json_files_two_levels(dir, ".json")? {
        let result = parse_checklist(&path).and_then(|c| {
            let expected = format!("{}.json", c.stem());
            let bench_dir = path.parent().and_then(Path::file_name).and_then(|s| s.to_str());
            let file = path.file_name().and_then(|s| s.to_str());
            if file != Some(expected.as_str()) || bench_dir != Some(c.benchmark_id()) {
                Err(ChecklistError::Invalid {
                    case_id: c.case_id().to_string(),
                    message: format!(
                        "file {} should be {}/{expected}",
                        path.display(),
                        c.benchmark_id()
                    ),
                })
            } else {
                Ok(c)
            }
        });
        out.push((path, result));
    }
    Ok(out)
}

pub(crate) fn json_files_two_levels(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, ChecklistError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ChecklistError::Io { path, source }
    };
    let mut files = Vec::new();
    if !dir.exists() {
        return Ok(files);
    }
    for bench in fs::read_dir(dir).map_err(io(dir))? {
        let bench = bench.map_err(io(dir))?.path();
        if !bench.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&bench).map_err(io(&bench))? {
            let path = entry.map_err(io(&bench))?.path();
            if path.is_file() && path.file_name().and_then(|s| s.to_str()).is_some_and(|n| n.ends_with(suffix)) {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

impl From<ModelError> for ChecklistError {
    fn from(e: ModelError) -> Self {
        ChecklistError::Invalid {
            case_id: String::new(),
            message: e.to_string(),
        }
    }
}
