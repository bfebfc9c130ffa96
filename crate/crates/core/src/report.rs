//! Report tables: score support, leaderboard resolution, Unknown-reason and
//! conflict breakdowns, and the review summary. Each renders as aligned
//! text, CSV or JSON; the JSON form parses back to the same rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{total_counts, CellCounts, LeaderboardClaim, Quantity};
use crate::ledger::{Decision, ReviewSummary, Trigger};
use crate::model::{token_enum, CellKey, ConflictCode, EvidenceLabel, RunRecord, UnknownCode};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("structured report does not parse: {0}")]
    Parse(#[from] serde_json::Error),
}

token_enum! {
    pub enum Format: "format" {
        Text => "text",
        Csv => "csv",
        Json => "json",
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A row type that renders as one line of a table.
pub trait TableRow: Serialize + DeserializeOwned {
    const NAME: &'static str;
    fn header() -> Vec<&'static str>;
    fn cells(&self) -> Vec<String>;
}

fn opt(q: &Option<Quantity>) -> String {
    q.as_ref().map_or_else(|| "n/a".into(), |q| q.display.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSupportRow {
    pub benchmark_id: String,
    /// `None` for the benchmark row.
    pub model_id: Option<String>,
    pub n: u64,
    pub p: u64,
    pub f: u64,
    pub u: u64,
    pub native_score: Option<Quantity>,
    pub lower: Option<Quantity>,
    pub upper: Option<Quantity>,
    pub unknown_share: Option<Quantity>,
    pub conflicts: u64,
    pub unknown_flag: bool,
    pub conflict_flag: bool,
    pub note: String,
}

impl ScoreSupportRow {
    fn from_counts(c: &CellCounts, model_id: Option<String>, note: String) -> Self {
        let over_n = |num: u64| (c.n > 0).then(|| Quantity::of(num, c.n));
        ScoreSupportRow {
            benchmark_id: c.cell.benchmark_id.clone(),
            model_id,
            n: c.n,
            p: c.p,
            f: c.f,
            u: c.u,
            native_score: over_n(c.native_successes),
            lower: over_n(c.p),
            upper: over_n(c.p + c.u),
            unknown_share: over_n(c.u),
            conflicts: c.conflict_records,
            unknown_flag: c.u > 0,
            conflict_flag: c.conflict_records > 0,
            note,
        }
    }

    pub fn bound_display(&self) -> String {
        match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => format!("[{}, {}]", l.display, u.display),
            _ => "n/a".into(),
        }
    }
}

impl TableRow for ScoreSupportRow {
    const NAME: &'static str = "score_support";

    fn header() -> Vec<&'static str> {
        vec!["scope", "N", "native", "P/F/U", "bound", "unknown_share", "conflicts", "note"]
    }

    fn cells(&self) -> Vec<String> {
        let scope = match &self.model_id {
            Some(m) => format!("  {m}"),
            None => self.benchmark_id.clone(),
        };
        vec![
            scope,
            self.n.to_string(),
            opt(&self.native_score),
            format!("{}/{}/{}", self.p, self.f, self.u),
            self.bound_display(),
            opt(&self.unknown_share),
            self.conflicts.to_string(),
            self.note.clone(),
        ]
    }
}

/// Benchmark rows (summed counts) each followed by their model rows, in
/// benchmark then model order. Benchmarks with no records are omitted.
pub fn score_support_table(cells: &[CellCounts], notes: &BTreeMap<String, String>) -> Vec<ScoreSupportRow> {
    let mut by_benchmark: BTreeMap<&str, Vec<&CellCounts>> = BTreeMap::new();
    for c in cells {
        by_benchmark.entry(c.cell.benchmark_id.as_str()).or_default().push(c);
    }
    let mut rows = Vec::new();
    for (benchmark, mut models) in by_benchmark {
        models.sort_by(|a, b| a.cell.model_id.cmp(&b.cell.model_id));
        let owned: Vec<CellCounts> = models.iter().map(|c| (*c).clone()).collect();
        let total = total_counts(CellKey::new(benchmark, ""), &owned);
        if total.n == 0 {
            continue;
        }
        let note = notes.get(benchmark).cloned().unwrap_or_default();
        rows.push(ScoreSupportRow::from_counts(&total, None, note));
        for c in models {
            rows.push(ScoreSupportRow::from_counts(c, Some(c.cell.model_id.clone()), String::new()));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub benchmark_id: String,
    pub native_point_order: String,
    pub separated: String,
    pub supported_claim: String,
    pub unresolved: bool,
}

impl TableRow for LeaderboardRow {
    const NAME: &'static str = "leaderboard";

    fn header() -> Vec<&'static str> {
        vec!["benchmark", "native_point_order", "separated", "supported_claim", "unresolved"]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.benchmark_id.clone(),
            self.native_point_order.clone(),
            self.separated.clone(),
            self.supported_claim.clone(),
            if self.unresolved { "yes" } else { "no" }.into(),
        ]
    }
}

pub fn leaderboard_table(claims: &[LeaderboardClaim]) -> Vec<LeaderboardRow> {
    claims
        .iter()
        .map(|c| LeaderboardRow {
            benchmark_id: c.benchmark_id.clone(),
            native_point_order: c.native_display(),
            separated: c.separated_label(),
            supported_claim: c.supported_display(),
            unresolved: c.separated_pairs < c.total_pairs,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonRow {
    pub benchmark_id: String,
    pub u: u64,
    pub reasons: BTreeMap<UnknownCode, u64>,
    pub conflicts: u64,
    pub conflict_types: BTreeMap<ConflictCode, u64>,
}

impl TableRow for ReasonRow {
    const NAME: &'static str = "reasons";

    fn header() -> Vec<&'static str> {
        vec!["benchmark", "U", "R1", "R2", "R3", "R4", "conflicts", "C1", "C2", "C3", "C4", "C5"]
    }

    fn cells(&self) -> Vec<String> {
        let mut out = vec![self.benchmark_id.clone(), self.u.to_string()];
        out.extend(UnknownCode::ALL.iter().map(|c| self.reasons.get(c).copied().unwrap_or(0).to_string()));
        out.push(self.conflicts.to_string());
        out.extend(ConflictCode::ALL.iter().map(|c| self.conflict_types.get(c).copied().unwrap_or(0).to_string()));
        out
    }
}

/// Primary Unknown reasons and confirmed conflict types per benchmark,
/// over records that count toward the denominator.
pub fn reason_breakdown(records: &[RunRecord]) -> Vec<ReasonRow> {
    let mut rows: BTreeMap<&str, ReasonRow> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.counts_in_denominator()) {
        let row = rows.entry(r.cell.benchmark_id.as_str()).or_insert_with(|| ReasonRow {
            benchmark_id: r.cell.benchmark_id.clone(),
            reasons: UnknownCode::ALL.iter().map(|c| (*c, 0)).collect(),
            conflict_types: ConflictCode::ALL.iter().map(|c| (*c, 0)).collect(),
            ..ReasonRow::default()
        });
        if r.native_aligned_label() == Some(EvidenceLabel::Unknown) {
            row.u += 1;
            if let Some(reason) = r.unknown_reason() {
                *row.reasons.entry(reason.code).or_default() += 1;
            }
        }
        if let Some(code) = r.conflict {
            row.conflicts += 1;
            *row.conflict_types.entry(code).or_default() += 1;
        }
    }
    rows.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub benchmark_id: String,
    #[serde(flatten)]
    pub summary: ReviewSummary,
}

impl TableRow for ReviewRow {
    const NAME: &'static str = "review_summary";

    fn header() -> Vec<&'static str> {
        let mut h = vec!["benchmark", "reviewed", "corrected"];
        h.extend(Decision::ALL.iter().map(|d| d.as_str()));
        h.extend(Trigger::ALL.iter().map(|t| t.as_str()));
        h
    }

    fn cells(&self) -> Vec<String> {
        let s = &self.summary;
        let mut out = vec![self.benchmark_id.clone(), s.reviewed.to_string(), s.corrected.to_string()];
        out.extend(Decision::ALL.iter().map(|d| s.by_decision.get(d).copied().unwrap_or(0).to_string()));
        out.extend(Trigger::ALL.iter().map(|t| s.by_trigger.get(t).copied().unwrap_or(0).to_string()));
        out
    }
}

pub fn review_table(summary: &BTreeMap<String, ReviewSummary>) -> Vec<ReviewRow> {
    summary
        .iter()
        .map(|(b, s)| ReviewRow {
            benchmark_id: b.clone(),
            summary: s.clone(),
        })
        .collect()
}

/// Renders rows in `format`. Output is deterministic.
pub fn render<T: TableRow>(rows: &[T], format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(rows).expect("rows serialize");
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(T::header()).expect("in-memory csv");
            for r in rows {
                w.write_record(r.cells()).expect("in-memory csv");
            }
            w.into_inner().expect("in-memory csv")
        }
        Format::Text => {
            let header: Vec<String> = T::header().into_iter().map(String::from).collect();
            let body: Vec<Vec<String>> = rows.iter().map(TableRow::cells).collect();
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for row in &body {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let mut out = String::new();
            for row in std::iter::once(&header).chain(&body) {
                let line: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:<w$}", w = *w))
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

/// Inverse of the JSON rendering.
pub fn parse_structured<T: TableRow>(bytes: &[u8]) -> Result<Vec<T>, ReportError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Writes `<dir>/<name>.{txt,csv,json}`.
pub fn write_table<T: TableRow>(dir: &Path, rows: &[T]) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for format in Format::ALL {
        let path = dir.join(format!("{}.{}", T::NAME, format.extension()));
        fs::write(&path, render(rows, *format)).map_err(|source| ReportError::Io { path, source })?;
    }
    Ok(())
}
