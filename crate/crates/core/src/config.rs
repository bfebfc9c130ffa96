//! Run configuration: one TOML file, then `EVIDENCE_STORE_ROOT`, then flags.
//!
//! Paths left out of the file default to locations under `store_root`.
//! Relative paths in the file resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer};
use thiserror::Error;

use crate::aggregate::Rational;

pub const STORE_ROOT_ENV: &str = "EVIDENCE_STORE_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("sample_rate `{0}` is not a rational in [0, 1]")]
    SampleRate(String),
    #[error("no store root: set `store_root`, {STORE_ROOT_ENV} or --store-root")]
    NoStoreRoot,
}

/// Parses `a/b`, a decimal such as `0.25`, or an integer.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let (n, d): (u64, u64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (d != 0).then(|| Rational::new(n, d));
    }
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if (int.is_empty() && frac.is_empty()) || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let den = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Rational::from_integer(int) + Rational::new(frac, den))
}

fn sample_rate_in_range(text: &str) -> Result<Rational, ConfigError> {
    parse_rational(text)
        .filter(|r| *r >= Rational::zero() && *r <= Rational::one())
        .ok_or_else(|| ConfigError::SampleRate(text.to_string()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawRate {
    Text(String),
    Int(u64),
    Float(f64),
}

fn de_rate<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    Ok(Option::<RawRate>::deserialize(d)?.map(|r| match r {
        RawRate::Text(s) => s,
        RawRate::Int(i) => i.to_string(),
        // The shortest round-trip decimal is what the author wrote.
        RawRate::Float(f) => format!("{f}"),
    }))
}

/// The file as written.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub store_root: Option<PathBuf>,
    pub checklist_dir: Option<PathBuf>,
    pub lock_dir: Option<PathBuf>,
    pub ledger_path: Option<PathBuf>,
    pub records_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    #[serde(default, deserialize_with = "de_rate")]
    pub sample_rate: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub excluded_benchmarks_from_leaderboard: Vec<String>,
    /// Free-text notes per benchmark for the score-support table.
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

/// Command-line overrides.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub store_root: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sample_rate: Option<String>,
    pub exclude_from_leaderboard: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub store_root: PathBuf,
    pub checklist_dir: PathBuf,
    pub lock_dir: PathBuf,
    pub ledger_path: PathBuf,
    pub records_path: PathBuf,
    pub output_dir: PathBuf,
    pub sample_rate: Rational,
    pub seed: u64,
    pub excluded_benchmarks_from_leaderboard: Vec<String>,
    pub notes: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults rooted at `store_root`: no sampling, seed 0.
    pub fn rooted(store_root: impl Into<PathBuf>) -> Self {
        let root = store_root.into();
        RunConfig {
            checklist_dir: root.join("checklists"),
            lock_dir: root.join("locks"),
            ledger_path: root.join("ledger.jsonl"),
            records_path: root.join("records.jsonl"),
            output_dir: root.join("out"),
            store_root: root,
            sample_rate: Rational::zero(),
            seed: 0,
            excluded_benchmarks_from_leaderboard: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<ConfigFile, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Resolves file, environment value and flags in that order of
    /// increasing precedence.
    pub fn resolve(
        file: Option<(&Path, ConfigFile)>,
        env_store_root: Option<PathBuf>,
        flags: &Overrides,
    ) -> Result<Self, ConfigError> {
        let (base, file) = match file {
            Some((path, f)) => (path.parent().map(Path::to_path_buf).unwrap_or_default(), f),
            None => (PathBuf::new(), ConfigFile::default()),
        };
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let store_root = flags
            .store_root
            .clone()
            .or(env_store_root)
            .or_else(|| file.store_root.clone().map(rel))
            .ok_or(ConfigError::NoStoreRoot)?;
        let mut cfg = RunConfig::rooted(store_root);
        let set = |slot: &mut PathBuf, v: Option<PathBuf>| {
            if let Some(v) = v {
                *slot = rel(v);
            }
        };
        set(&mut cfg.checklist_dir, file.checklist_dir);
        set(&mut cfg.lock_dir, file.lock_dir);
        set(&mut cfg.ledger_path, file.ledger_path);
        set(&mut cfg.records_path, file.records_path);
        set(&mut cfg.output_dir, file.output_dir);
        if let Some(rate) = flags.sample_rate.as_ref().or(file.sample_rate.as_ref()) {
            cfg.sample_rate = sample_rate_in_range(rate)?;
        }
        cfg.seed = flags.seed.or(file.seed).unwrap_or(0);
        cfg.excluded_benchmarks_from_leaderboard = file.excluded_benchmarks_from_leaderboard;
        for b in &flags.exclude_from_leaderboard {
            if !cfg.excluded_benchmarks_from_leaderboard.contains(b) {
                cfg.excluded_benchmarks_from_leaderboard.push(b.clone());
            }
        }
        cfg.notes = file.notes;
        Ok(cfg)
    }

    /// Loads `path` (if any) and applies the environment and flags.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, ConfigError> {
        let file = match path {
            Some(p) => Some((p, Self::from_file(p)?)),
            None => None,
        };
        let env = std::env::var_os(STORE_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        Self::resolve(file, env, flags)
    }
}
