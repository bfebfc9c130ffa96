use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{checklist_stem, json_files_two_levels, Arm, CaseChecklist, ChecklistError};
use crate::hash::ContentHash;

/// A checklist frozen before evidence scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockedChecklist {
    pub checklist: CaseChecklist,
    pub lock_hash: ContentHash,
    pub locked_at: DateTime<Utc>,
    pub reviewer_ids: Vec<String>,
}

impl LockedChecklist {
    pub fn case_label(&self) -> String {
        format!("{}/{}", self.checklist.benchmark_id(), self.checklist.stem())
    }
}

/// Computes the lock over the checklist's canonical bytes.
pub fn lock_checklist(
    checklist: CaseChecklist,
    reviewers: &[String],
    locked_at: DateTime<Utc>,
) -> Result<LockedChecklist, ChecklistError> {
    let distinct: BTreeSet<&str> = reviewers.iter().map(String::as_str).filter(|r| !r.is_empty()).collect();
    if distinct.len() < 2 {
        return Err(ChecklistError::InsufficientReviewers(distinct.len()));
    }
    Ok(LockedChecklist {
        lock_hash: checklist.content_hash(),
        checklist,
        locked_at,
        reviewer_ids: reviewers.to_vec(),
    })
}

/// True iff the stored hash matches the checklist's canonical bytes.
pub fn verify_lock(locked: &LockedChecklist) -> bool {
    locked.checklist.content_hash() == locked.lock_hash
}

/// `locks/<benchmark>/<case>[.<arm>].lock.json`
#[derive(Debug, Clone)]
pub struct LockStore {
    root: PathBuf,
}

impl LockStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LockStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, benchmark_id: &str, case_id: &str, arm: Option<Arm>) -> PathBuf {
        self.root
            .join(benchmark_id)
            .join(format!("{}.lock.json", checklist_stem(case_id, arm)))
    }

    /// Locks and persists. Re-locking identical content is a no-op that
    /// returns the stored lock; different content is a conflict.
    pub fn lock(
        &self,
        checklist: CaseChecklist,
        reviewers: &[String],
        locked_at: DateTime<Utc>,
    ) -> Result<LockedChecklist, ChecklistError> {
        let path = self.path_for(checklist.benchmark_id(), checklist.case_id(), checklist.arm());
        let fresh = lock_checklist(checklist, reviewers, locked_at)?;
        if path.exists() {
            let existing = read_lock(&path)?;
            if existing.lock_hash == fresh.lock_hash && verify_lock(&existing) {
                return Ok(existing);
            }
            return Err(ChecklistError::LockConflict {
                case: fresh.case_label(),
                path,
            });
        }
        let io = |source| ChecklistError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut text = serde_json::to_string_pretty(&fresh).expect("locks serialize");
        text.push('\n');
        fs::write(&path, text).map_err(io)?;
        Ok(fresh)
    }

    pub fn load(
        &self,
        benchmark_id: &str,
        case_id: &str,
        arm: Option<Arm>,
    ) -> Result<Option<LockedChecklist>, ChecklistError> {
        let path = self.path_for(benchmark_id, case_id, arm);
        if !path.exists() {
            return Ok(None);
        }
        read_lock(&path).map(Some)
    }

    /// Every lock file under the store, sorted by path.
    pub fn load_all(&self) -> Result<Vec<(PathBuf, Result<LockedChecklist, ChecklistError>)>, ChecklistError> {
        Ok(json_files_two_levels(&self.root, ".lock.json")?
            .into_iter()
            .map(|p| {
                let r = read_lock(&p);
                (p, r)
            })
            .collect())
    }
}

pub fn read_lock(path: &Path) -> Result<LockedChecklist, ChecklistError> {
    let bytes = fs::read(path).map_err(|source| ChecklistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ChecklistError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
