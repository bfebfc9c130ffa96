//! Cell counts, counted-only scores, performance bounds and
//! interval-separation leaderboard claims.
//!
//! All arithmetic is exact over `Ratio<u64>`; floating point never appears.
//! Percentages are rendered to one decimal place, rounding half away from
//! zero, from integer arithmetic.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CellKey, EvidenceLabel, NativeLabel, RecordStatus, RunRecord};

pub type Rational = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("record `{0}` has no native-aligned evidence label")]
    MissingLabel(String),
    #[error("cell {0} has no decidable records")]
    NoDecidableRecords(CellKey),
    #[error("cell {0} is empty")]
    EmptyCell(CellKey),
    #[error("benchmark `{0}` needs at least two models for a leaderboard claim")]
    TooFewModels(String),
}

/// Evidence-state counts for one model on one benchmark. `n = p + f + u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub cell: CellKey,
    pub p: u64,
    pub f: u64,
    pub u: u64,
    pub n: u64,
    pub native_successes: u64,
    pub conflict_records: u64,
}

impl CellCounts {
    pub fn new(cell: CellKey, p: u64, f: u64, u: u64) -> Self {
        CellCounts {
            cell,
            p,
            f,
            u,
            n: p + f + u,
            native_successes: 0,
            conflict_records: 0,
        }
    }

    fn nonempty(&self) -> Result<(), AggregateError> {
        if self.n == 0 {
            Err(AggregateError::EmptyCell(self.cell.clone()))
        } else {
            Ok(())
        }
    }
}

/// Tallies included records of one cell. Agent-fault records without an
/// evidence assignment count as failures when the native label failed.
pub fn cell_counts(cell: &CellKey, records: &[&RunRecord]) -> Result<CellCounts, AggregateError> {
    let mut c = CellCounts::new(cell.clone(), 0, 0, 0);
    for r in records {
        debug_assert_eq!(&r.cell, cell);
        let label = match r.native_aligned_label() {
            Some(l) => l,
            None if r.status == RecordStatus::AgentFault && r.native.label == NativeLabel::Failure => {
                EvidenceLabel::EvidenceFail
            }
            None => return Err(AggregateError::MissingLabel(r.record_id.clone())),
        };
        match label {
            EvidenceLabel::EvidencePass => c.p += 1,
            EvidenceLabel::EvidenceFail => c.f += 1,
            EvidenceLabel::Unknown => c.u += 1,
        }
        if r.native.label == NativeLabel::Success {
            c.native_successes += 1;
        }
        if r.conflict.is_some() {
            c.conflict_records += 1;
        }
    }
    c.n = c.p + c.f + c.u;
    Ok(c)
}

/// Groups records that count toward the denominator by cell.
pub fn counts_by_cell(records: &[RunRecord]) -> BTreeMap<CellKey, Result<CellCounts, AggregateError>> {
    let mut groups: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.counts_in_denominator()) {
        groups.entry(r.cell.clone()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(cell, rs)| {
            let counts = cell_counts(&cell, &rs);
            (cell, counts)
        })
        .collect()
}

/// P / (P + F): the success fraction among decidable records.
pub fn counted_score(c: &CellCounts) -> Result<Rational, AggregateError> {
    if c.p + c.f == 0 {
        return Err(AggregateError::NoDecidableRecords(c.cell.clone()));
    }
    Ok(Ratio::new(c.p, c.p + c.f))
}

/// Partial-identification interval of all-record success rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bound {
    pub lower: Rational,
    pub upper: Rational,
}

impl Bound {
    pub fn width(&self) -> Rational {
        self.upper - self.lower
    }
}

/// [P/N, (P+U)/N]
pub fn performance_bounds(c: &CellCounts) -> Result<Bound, AggregateError> {
    c.nonempty()?;
    Ok(Bound {
        lower: Ratio::new(c.p, c.n),
        upper: Ratio::new(c.p + c.u, c.n),
    })
}

pub fn unknown_share(c: &CellCounts) -> Result<Rational, AggregateError> {
    c.nonempty()?;
    Ok(Ratio::new(c.u, c.n))
}

/// Released native score, taken from native labels only.
pub fn native_score(c: &CellCounts) -> Result<Rational, AggregateError> {
    c.nonempty()?;
    Ok(Ratio::new(c.native_successes, c.n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairDecision {
    LeftWins,
    RightWins,
    Unresolved,
}

impl PairDecision {
    pub fn swap(self) -> Self {
        match self {
            PairDecision::LeftWins => PairDecision::RightWins,
            PairDecision::RightWins => PairDecision::LeftWins,
            PairDecision::Unresolved => PairDecision::Unresolved,
        }
    }
}

/// Strict interval separation. Touching or overlapping intervals are
/// unresolved, never tied.
pub fn pairwise_resolution(left: &Bound, right: &Bound) -> PairDecision {
    if left.lower > right.upper {
        PairDecision::LeftWins
    } else if right.lower > left.upper {
        PairDecision::RightWins
    } else {
        PairDecision::Unresolved
    }
}

/// One model's inputs to a leaderboard claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entrant {
    pub model_id: String,
    pub bound: Bound,
    pub native: Rational,
}

impl Entrant {
    pub fn from_counts(c: &CellCounts) -> Result<Self, AggregateError> {
        Ok(Entrant {
            model_id: c.cell.model_id.clone(),
            bound: performance_bounds(c)?,
            native: native_score(c)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairResult {
    pub left: String,
    pub right: String,
    pub decision: PairDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardClaim {
    pub benchmark_id: String,
    pub separated_pairs: usize,
    pub total_pairs: usize,
    pub pairs: Vec<PairResult>,
    /// (winner, loser) for every separated pair.
    pub supported_relation: Vec<(String, String)>,
    /// The supported relation as a chain when it is a strict total order.
    pub supported_order: Option<Vec<String>>,
    /// Models by native score, best first; each group holds equal scores.
    pub native_point_order: Vec<Vec<String>>,
}

impl LeaderboardClaim {
    pub fn separated_label(&self) -> String {
        format!("{}/{}", self.separated_pairs, self.total_pairs)
    }

    /// `C > G > D`, a list of separated pairs, or `none`.
    pub fn supported_display(&self) -> String {
        if let Some(order) = &self.supported_order {
            return order.join(" > ");
        }
        if self.supported_relation.is_empty() {
            return "none".into();
        }
        self.supported_relation
            .iter()
            .map(|(w, l)| format!("{w} > {l}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn native_display(&self) -> String {
        self.native_point_order
            .iter()
            .map(|g| g.join(" = "))
            .collect::<Vec<_>>()
            .join(" > ")
    }
}

/// Applies the separation rule to every unordered pair of models.
pub fn leaderboard_claim(benchmark_id: &str, entrants: &[Entrant]) -> Result<LeaderboardClaim, AggregateError> {
    if entrants.len() < 2 {
        return Err(AggregateError::TooFewModels(benchmark_id.to_string()));
    }
    let mut sorted: Vec<&Entrant> = entrants.iter().collect();
    sorted.sort_by(|a, b| a.model_id.cmp(&b.model_id));

    let mut pairs = Vec::new();
    let mut relation = Vec::new();
    let mut wins: BTreeMap<&str, usize> = sorted.iter().map(|e| (e.model_id.as_str(), 0)).collect();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let decision = pairwise_resolution(&a.bound, &b.bound);
            let winner = match decision {
                PairDecision::LeftWins => Some((a, b)),
                PairDecision::RightWins => Some((b, a)),
                PairDecision::Unresolved => None,
            };
            if let Some((w, l)) = winner {
                relation.push((w.model_id.clone(), l.model_id.clone()));
                *wins.get_mut(w.model_id.as_str()).expect("model registered") += 1;
            }
            pairs.push(PairResult {
                left: a.model_id.clone(),
                right: b.model_id.clone(),
                decision,
            });
        }
    }
    let total_pairs = pairs.len();
    let separated_pairs = relation.len();
    // Interval separation is transitive, so all pairs separated means a
    // strict total order ranked by win count.
    let supported_order = (separated_pairs == total_pairs).then(|| {
        let mut order: Vec<(&str, usize)> = wins.into_iter().collect();
        order.sort_by_key(|o| std::cmp::Reverse(o.1));
        order.into_iter().map(|(m, _)| m.to_string()).collect()
    });
    relation.sort();

    let mut by_native = sorted.clone();
    by_native.sort_by(|a, b| b.native.cmp(&a.native).then(a.model_id.cmp(&b.model_id)));
    let mut native_point_order: Vec<Vec<String>> = Vec::new();
    let mut last: Option<Rational> = None;
    for e in by_native {
        match (last, native_point_order.last_mut()) {
            (Some(score), Some(group)) if score == e.native => group.push(e.model_id.clone()),
            _ => native_point_order.push(vec![e.model_id.clone()]),
        }
        last = Some(e.native);
    }

    Ok(LeaderboardClaim {
        benchmark_id: benchmark_id.to_string(),
        separated_pairs,
        total_pairs,
        pairs,
        supported_relation: relation,
        supported_order,
        native_point_order,
    })
}

/// Percentage to one decimal, half away from zero: `13/82` → `15.9%`.
pub fn format_percent(r: Rational) -> String {
    percent_of(*r.numer(), *r.denom())
}

/// Same as [`format_percent`] without reducing first.
pub fn percent_of(num: u64, den: u64) -> String {
    assert!(den > 0, "percent of an empty denominator");
    let tenths = (2000 * num as u128 + den as u128) / (2 * den as u128);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

/// Exact fraction and its display form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub exact: String,
    pub display: String,
}

impl Quantity {
    pub fn of(num: u64, den: u64) -> Self {
        Quantity {
            exact: format!("{num}/{den}"),
            display: percent_of(num, den),
        }
    }
}

/// One row of `cells.json`. Fractions keep their unreduced count form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub counts: CellCounts,
    pub counted_score: Option<Quantity>,
    pub lower: Option<Quantity>,
    pub upper: Option<Quantity>,
    pub unknown_share: Option<Quantity>,
    pub native_score: Option<Quantity>,
}

impl CellSummary {
    pub fn new(counts: CellCounts) -> Self {
        let c = &counts;
        let over_n = |num: u64| (c.n > 0).then(|| Quantity::of(num, c.n));
        CellSummary {
            counted_score: (c.p + c.f > 0).then(|| Quantity::of(c.p, c.p + c.f)),
            lower: over_n(c.p),
            upper: over_n(c.p + c.u),
            unknown_share: over_n(c.u),
            native_score: over_n(c.native_successes),
            counts,
        }
    }

    /// `[15.9%, 65.9%]`
    pub fn bound_display(&self) -> String {
        match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => format!("[{}, {}]", l.display, u.display),
            _ => "n/a".into(),
        }
    }
}

impl PartialEq<Rational> for Quantity {
    fn eq(&self, other: &Rational) -> bool {
        match self.exact.split_once('/') {
            Some((n, d)) => match (n.parse::<u64>(), d.parse::<u64>()) {
                (Ok(n), Ok(d)) if d != 0 => Ratio::new(n, d) == *other,
                _ => false,
            },
            None => false,
        }
    }
}

/// Sum of all cells' counts, e.g. for a benchmark row.
pub fn total_counts(cell: CellKey, cells: &[CellCounts]) -> CellCounts {
    let mut t = CellCounts::new(cell, 0, 0, 0);
    for c in cells {
        t.p += c.p;
        t.f += c.f;
        t.u += c.u;
        t.native_successes += c.native_successes;
        t.conflict_records += c.conflict_records;
    }
    t.n = t.p + t.f + t.u;
    t
}

/// Convenience for tests and callers holding a lower bound: the identity
/// `lower = counted_score · (P + F) / N`.
pub fn lower_from_counted(c: &CellCounts) -> Option<Rational> {
    let counted = counted_score(c).ok()?;
    if c.n.is_zero() {
        return None;
    }
    Some(counted * Ratio::new(c.p + c.f, c.n))
}
