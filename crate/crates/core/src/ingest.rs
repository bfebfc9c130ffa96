//! Loading run records, artifact bundles and sampling manifests, plus the
//! denominator rule.
//!
//! Store layout under the store root:
//!
//! ```text
//! records.jsonl
//! manifests/<benchmark>.json
//! bundles/<bundle_id>/manifest.json
//! bundles/<bundle_id>/<path>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::ContentHash;
use crate::model::{token_enum, CellKey, ModelError, RecordStatus, RunRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate record_id `{0}`")]
    DuplicateId(String),
    #[error("record `{record_id}` references missing bundle {bundle_ref}")]
    DanglingBundle { record_id: String, bundle_ref: ContentHash },
    #[error("manifest is for `{manifest}` but a record belongs to `{record}`")]
    BenchmarkMismatch { manifest: String, record: String },
    #[error("invalid sampling manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

token_enum! {
    pub enum MediaKind: "media kind" {
        Structured => "structured",
        Text => "text",
        Binary => "binary",
    }
}

impl MediaKind {
    pub const fn mime(self) -> &'static str {
        match self {
            MediaKind::Structured => "application/json",
            MediaKind::Text => "text/plain; charset=utf-8",
            MediaKind::Binary => "application/octet-stream",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub role: String,
    pub media_kind: MediaKind,
    pub path: String,
    pub content_hash: ContentHash,
}

/// Manifest of retained artifacts, addressed by role. The bundle id is the
/// hash of the canonical entry list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactBundle {
    pub bundle_id: ContentHash,
    pub entries: Vec<BundleEntry>,
}

impl ArtifactBundle {
    pub fn new(mut entries: Vec<BundleEntry>) -> Result<Self, IngestError> {
        entries.sort_by(|a, b| a.role.cmp(&b.role));
        for pair in entries.windows(2) {
            if pair[0].role == pair[1].role {
                return Err(IngestError::InvalidBundle(format!("duplicate role `{}`", pair[0].role)));
            }
        }
        for e in &entries {
            check_relative(&e.path)?;
        }
        Ok(ArtifactBundle {
            bundle_id: ContentHash::of_canonical(&entries),
            entries,
        })
    }

    pub fn entry(&self, role: &str) -> Option<&BundleEntry> {
        self.entries.iter().find(|e| e.role == role)
    }

    pub fn expected_id(&self) -> ContentHash {
        ContentHash::of_canonical(&self.entries)
    }
}

fn check_relative(path: &str) -> Result<(), IngestError> {
    let p = Path::new(path);
    let ok = !path.is_empty()
        && p.components().all(|c| matches!(c, Component::Normal(_)))
        && path != "manifest.json";
    if ok {
        Ok(())
    } else {
        Err(IngestError::InvalidBundle(format!("artifact path `{path}` must be a plain relative path")))
    }
}

/// One artifact to be written into a bundle.
#[derive(Debug, Clone)]
pub struct NewArtifact {
    pub role: String,
    pub media_kind: MediaKind,
    pub path: String,
    pub bytes: Vec<u8>,
}

impl NewArtifact {
    pub fn structured(role: &str, value: &serde_json::Value) -> Self {
        NewArtifact {
            role: role.to_string(),
            media_kind: MediaKind::Structured,
            path: format!("{role}.json"),
            bytes: serde_json::to_vec_pretty(value).expect("json values serialize"),
        }
    }

    pub fn text(role: &str, text: &str) -> Self {
        NewArtifact {
            role: role.to_string(),
            media_kind: MediaKind::Text,
            path: format!("{role}.txt"),
            bytes: text.as_bytes().to_vec(),
        }
    }
}

/// Filesystem artifact store rooted at `<store_root>/bundles`.
#[derive(Debug, Clone)]
pub struct BundleStore {
    root: PathBuf,
}

impl BundleStore {
    pub fn new(store_root: impl AsRef<Path>) -> Self {
        BundleStore {
            root: store_root.as_ref().join("bundles"),
        }
    }

    pub fn bundle_dir(&self, id: &ContentHash) -> PathBuf {
        self.root.join(id.as_str())
    }

    pub fn manifest_path(&self, id: &ContentHash) -> PathBuf {
        self.bundle_dir(id).join("manifest.json")
    }

    pub fn contains(&self, id: &ContentHash) -> bool {
        self.manifest_path(id).is_file()
    }

    /// Writes artifacts and their manifest; identical content maps to the
    /// same bundle id and is written once.
    pub fn put(&self, artifacts: &[NewArtifact]) -> Result<ArtifactBundle, IngestError> {
        let entries = artifacts
            .iter()
            .map(|a| BundleEntry {
                role: a.role.clone(),
                media_kind: a.media_kind,
                path: a.path.clone(),
                content_hash: ContentHash::of_bytes(&a.bytes),
            })
            .collect();
        let bundle = ArtifactBundle::new(entries)?;
        let dir = self.bundle_dir(&bundle.bundle_id);
        if self.contains(&bundle.bundle_id) {
            return Ok(bundle);
        }
        for a in artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        }
        let manifest = self.manifest_path(&bundle.bundle_id);
        let text = serde_json::to_vec_pretty(&bundle).expect("bundles serialize");
        fs::write(&manifest, text).map_err(io_err(&manifest))?;
        Ok(bundle)
    }

    pub fn load(&self, id: &ContentHash) -> Result<ArtifactBundle, IngestError> {
        let path = self.manifest_path(id);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let bundle: ArtifactBundle = serde_json::from_slice(&bytes)
            .map_err(|e| IngestError::InvalidBundle(format!("{}: {e}", path.display())))?;
        for e in &bundle.entries {
            check_relative(&e.path)?;
        }
        Ok(bundle)
    }

    /// Raw bytes for one role, without hash verification.
    pub fn read_raw(&self, bundle: &ArtifactBundle, role: &str) -> Option<(MediaKind, Vec<u8>)> {
        let entry = bundle.entry(role)?;
        let bytes = fs::read(self.bundle_dir(&bundle.bundle_id).join(&entry.path)).ok()?;
        Some((entry.media_kind, bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleFinding {
    HashMismatch {
        role: String,
        path: String,
        expected: ContentHash,
        actual: ContentHash,
    },
    MissingFile { role: String, path: String },
    IdMismatch { stored: ContentHash, computed: ContentHash },
    DuplicateRole { role: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleReport {
    pub bundle_id: ContentHash,
    pub findings: Vec<BundleFinding>,
}

impl BundleReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Re-hashes every entry of `bundle` under `<store_root>/bundles`.
pub fn verify_bundle(bundle: &ArtifactBundle, store_root: &Path) -> BundleReport {
    let dir = BundleStore::new(store_root).bundle_dir(&bundle.bundle_id);
    let mut findings = Vec::new();
    let computed = bundle.expected_id();
    if computed != bundle.bundle_id {
        findings.push(BundleFinding::IdMismatch {
            stored: bundle.bundle_id.clone(),
            computed,
        });
    }
    let mut roles = BTreeSet::new();
    for e in &bundle.entries {
        if !roles.insert(e.role.as_str()) {
            findings.push(BundleFinding::DuplicateRole { role: e.role.clone() });
        }
        match fs::read(dir.join(&e.path)) {
            Ok(bytes) => {
                let actual = ContentHash::of_bytes(&bytes);
                if actual != e.content_hash {
                    findings.push(BundleFinding::HashMismatch {
                        role: e.role.clone(),
                        path: e.path.clone(),
                        expected: e.content_hash.clone(),
                        actual,
                    });
                }
            }
            Err(_) => findings.push(BundleFinding::MissingFile {
                role: e.role.clone(),
                path: e.path.clone(),
            }),
        }
    }
    BundleReport {
        bundle_id: bundle.bundle_id.clone(),
        findings,
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<RunRecord, IngestError> {
    let record: RunRecord = serde_json::from_str(line).map_err(|e| IngestError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    record.validate().map_err(|e: ModelError| IngestError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(record)
}

/// Parses line-delimited records without touching the artifact store.
pub fn parse_run_records(text: &str) -> Result<Vec<RunRecord>, IngestError> {
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(i + 1, line)?;
        if !ids.insert(record.record_id.clone()) {
            return Err(IngestError::DuplicateId(record.record_id));
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads records in file order and checks every bundle reference resolves.
pub fn load_run_records(path: &Path, store: &BundleStore) -> Result<Vec<RunRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let records = parse_run_records(&text)?;
    let dangling = records
        .par_iter()
        .find_first(|r| r.bundle_ref.as_ref().is_some_and(|b| !store.contains(b)));
    if let Some(r) = dangling {
        return Err(IngestError::DanglingBundle {
            record_id: r.record_id.clone(),
            bundle_ref: r.bundle_ref.clone().expect("checked above"),
        });
    }
    Ok(records)
}

/// Writes records one per line.
pub fn save_run_records(path: &Path, records: &[RunRecord]) -> Result<(), IngestError> {
    write_jsonl(path, records)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("records serialize");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))
}

/// Records split by the denominator rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenominatorPartition {
    pub included: Vec<RunRecord>,
    pub excluded: Vec<(RunRecord, RecordStatus)>,
}

/// Only infrastructure and pre-run failures leave the denominator.
/// Agent faults stay in N. A paired-arm record is one case unit, so a
/// failure in either arm excludes the whole record.
pub fn apply_denominator_rule(records: Vec<RunRecord>) -> DenominatorPartition {
    let mut partition = DenominatorPartition::default();
    for r in records {
        if r.status.counts_in_denominator() {
            partition.included.push(r);
        } else {
            let status = r.status;
            partition.excluded.push((r, status));
        }
    }
    partition
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub case_id: String,
    pub reason: String,
}

/// Frozen sample of case units for one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingManifest {
    pub benchmark_id: String,
    pub pool_size: usize,
    #[serde(default)]
    pub pool_case_ids: Option<Vec<String>>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    pub seed: u64,
    pub selected_case_ids: Vec<String>,
}

impl SamplingManifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| IngestError::InvalidManifest(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut selected = BTreeSet::new();
        for id in &self.selected_case_ids {
            if !selected.insert(id.as_str()) {
                return Err(IngestError::InvalidManifest(format!("case `{id}` selected twice")));
            }
        }
        let excluded: BTreeSet<&str> = self.exclusions.iter().map(|e| e.case_id.as_str()).collect();
        if let Some(id) = selected.intersection(&excluded).next() {
            return Err(IngestError::InvalidManifest(format!("case `{id}` is both excluded and selected")));
        }
        if let Some(pool) = &self.pool_case_ids {
            let pool: BTreeSet<&str> = pool.iter().map(String::as_str).collect();
            if pool.len() != self.pool_size {
                return Err(IngestError::InvalidManifest("pool_case_ids length differs from pool_size".into()));
            }
            if let Some(id) = selected.iter().find(|id| !pool.contains(*id)) {
                return Err(IngestError::InvalidManifest(format!("case `{id}` is not in the pool")));
            }
        }
        if selected.len() + excluded.len() > self.pool_size {
            return Err(IngestError::InvalidManifest(format!(
                "{} selected + {} excluded exceeds pool size {}",
                selected.len(),
                excluded.len(),
                self.pool_size
            )));
        }
        Ok(())
    }
}

/// Mismatches between a manifest and the records claiming to follow it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestReport {
    /// Selected cases with no record for some model: (case_id, model_id).
    pub missing: Vec<(String, String)>,
    /// Records whose case was not selected.
    pub unselected: Vec<String>,
    /// (cell, case_id) pairs with more than one record.
    pub duplicates: Vec<(CellKey, String)>,
}

impl ManifestReport {
    pub fn is_consistent(&self) -> bool {
        self.missing.is_empty() && self.unselected.is_empty() && self.duplicates.is_empty()
    }
}

pub fn validate_sampling_manifest(
    manifest: &SamplingManifest,
    records: &[RunRecord],
) -> Result<ManifestReport, IngestError> {
    if let Some(r) = records.iter().find(|r| r.cell.benchmark_id != manifest.benchmark_id) {
        return Err(IngestError::BenchmarkMismatch {
            manifest: manifest.benchmark_id.clone(),
            record: r.cell.benchmark_id.clone(),
        });
    }
    manifest.validate()?;
    let selected: BTreeSet<&str> = manifest.selected_case_ids.iter().map(String::as_str).collect();
    let models: BTreeSet<&str> = records.iter().map(|r| r.cell.model_id.as_str()).collect();

    let mut seen: BTreeMap<(CellKey, &str), usize> = BTreeMap::new();
    let mut report = ManifestReport::default();
    for r in records {
        *seen.entry((r.cell.clone(), r.case_id.as_str())).or_default() += 1;
        if !selected.contains(r.case_id.as_str()) {
            report.unselected.push(r.record_id.clone());
        }
    }
    for case in &manifest.selected_case_ids {
        for model in &models {
            let key = (CellKey::new(&manifest.benchmark_id, *model), case.as_str());
            if !seen.contains_key(&key) {
                report.missing.push((case.clone(), model.to_string()));
            }
        }
    }
    report.duplicates = seen
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|((cell, case), _)| (cell, case.to_string()))
        .collect();
    Ok(report)
}
