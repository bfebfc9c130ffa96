//! Evidence auditing for completed agent-benchmark runs.
//!
//! Records from a benchmark harness are re-scored against locked per-case
//! checklists. Each record receives a three-state evidence label, cells are
//! summarized as exact performance bounds, and human review decisions are
//! kept in a hash-chained ledger.

pub mod aggregate;
pub mod checklist;
pub mod config;
pub mod evaluator;
pub mod hash;
pub mod ingest;
pub mod ledger;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod serve;
