use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{error, info, warn};

use evaudit::config::{Overrides, RunConfig};
use evaudit::ledger::{EntryDraft, ReviewQueueItem};
use evaudit::pipeline::{self, PipelineError};
use evaudit::report::{render, Format, TableRow};
use evaudit::serve::{serve, ApiState};

#[derive(Parser)]
#[command(name = "evaudit", version, about = "Evidence audit of completed agent-benchmark runs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured store root (and EVIDENCE_STORE_ROOT).
    #[arg(long, global = true)]
    store_root: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sampled-check rate as `a/b` or a decimal in [0, 1].
    #[arg(long, global = true)]
    sample_rate: Option<String>,
    #[arg(long, global = true, default_value = "text")]
    format: Format,
    /// Restrict to one benchmark.
    #[arg(long, global = true)]
    benchmark: Option<String>,
    /// Leave a benchmark out of leaderboard claims (repeatable).
    #[arg(long, global = true)]
    exclude_from_leaderboard: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load run records, check bundle references and store them.
    Ingest {
        /// Records file to ingest; defaults to the configured records path.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Check sampling manifests, bundles, checklist locks and the ledger.
    Validate,
    /// Lock every checklist in the checklist directory.
    Lock {
        /// Reviewer id (at least two distinct).
        #[arg(long = "reviewer", required = true)]
        reviewers: Vec<String>,
        /// Lock time (RFC 3339); defaults to now.
        #[arg(long)]
        locked_at: Option<DateTime<Utc>>,
    },
    /// Evaluate records against locked checklists and aggregate cells.
    Score,
    /// Review ledger operations.
    Adjudicate {
        #[command(subcommand)]
        action: Adjudicate,
    },
    /// Render report tables from persisted outputs.
    Report,
    /// Pairwise resolution and supported leaderboard claims.
    Rank,
    /// Serve the review API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Require `Authorization: Bearer <token>`.
        #[arg(long)]
        token: Option<String>,
    },
}

#[derive(Subcommand)]
enum Adjudicate {
    /// Apply the ledger to scored records and rewrite corrected outputs.
    Apply,
    /// Append one decision from a JSON file (`-` for stdin).
    Append {
        #[arg(long)]
        entry: PathBuf,
    },
    /// Print the review queue.
    Queue,
}

#[derive(Serialize, Deserialize)]
struct QueueRow {
    record_id: String,
    triggers: String,
    native: String,
    evidence: String,
    candidates: String,
}

impl TableRow for QueueRow {
    const NAME: &'static str = "queue";

    fn header() -> Vec<&'static str> {
        vec!["record_id", "triggers", "native", "evidence", "candidates"]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.record_id.clone(),
            self.triggers.clone(),
            self.native.clone(),
            self.evidence.clone(),
            self.candidates.clone(),
        ]
    }
}

fn queue_row(item: &ReviewQueueItem) -> QueueRow {
    QueueRow {
        record_id: item.record_id.clone(),
        triggers: item.triggers.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" "),
        native: item.native.label.to_string(),
        evidence: item.evidence.as_ref().map_or_else(|| "-".into(), |e| e.label.to_string()),
        candidates: item
            .conflict_candidates
            .iter()
            .map(|c| c.suggested_code.as_str())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn out(bytes: &[u8]) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(bytes);
}

fn print_json<T: Serialize>(value: &T) {
    let mut text = serde_json::to_vec_pretty(value).expect("output serializes");
    text.push(b'\n');
    out(&text);
}

fn read_draft(path: &PathBuf) -> Result<EntryDraft, PipelineError> {
    let text = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())
    } else {
        std::fs::read_to_string(path)
    }
    .map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| PipelineError::Usage(format!("entry: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("timestamp").or_insert_with(|| json!(Utc::now()));
    }
    serde_json::from_value(value).map_err(|e| PipelineError::Usage(format!("entry: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let g = &cli.global;
    let flags = Overrides {
        store_root: g.store_root.clone(),
        seed: g.seed,
        sample_rate: g.sample_rate.clone(),
        exclude_from_leaderboard: g.exclude_from_leaderboard.clone(),
    };
    let cfg = RunConfig::load(g.config.as_deref(), &flags)?;
    let benchmark = g.benchmark.as_deref();
    let format = g.format;

    match cli.command {
        Command::Ingest { input } => {
            let s = pipeline::ingest(&cfg, input.as_deref())?;
            info!("ingested {} records into {}", s.records, cfg.records_path.display());
            print_json(&s);
        }
        Command::Validate => {
            let report = pipeline::validate(&cfg)?;
            for p in &report.problems {
                error!("{p}");
            }
            print_json(&report);
            if !report.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Lock { reviewers, locked_at } => {
            let outcome = pipeline::lock_all(&cfg, &reviewers, locked_at.unwrap_or_else(Utc::now), benchmark)?;
            for l in &outcome.locked {
                out(format!("{}  {}\n", l.lock_hash, l.case_label()).as_bytes());
            }
            for e in &outcome.errors {
                error!("{e}");
            }
            if !outcome.errors.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Score => {
            let s = pipeline::score(&cfg, benchmark)?;
            for b in &s.blocked {
                error!("case {} blocked: {} ({} record(s))", b.case, b.reason, b.records.len());
            }
            for c in &s.cells.incomplete {
                warn!("cell {} incomplete: {}", c.cell, c.message);
            }
            print_json(&json!({
                "records": s.scored.len(),
                "evaluated": s.details.iter().filter(|d| d.evaluated).count(),
                "queued": s.queue.len(),
                "probe_candidates": s.probes.len(),
                "cells": s.cells.cells.len(),
                "blocked_cases": s.blocked.iter().map(|b| &b.case).collect::<Vec<_>>(),
                "outputs": cfg.output_dir,
            }));
            if !s.blocked.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Adjudicate { action } => match action {
            Adjudicate::Apply => {
                let (corrected, cells) = pipeline::apply(&cfg)?;
                info!("applied ledger to {} records", corrected.len());
                print_json(&cells);
            }
            Adjudicate::Append { entry } => {
                let receipt = pipeline::append(&cfg, read_draft(&entry)?)?;
                print_json(&receipt);
            }
            Adjudicate::Queue => {
                let queue = pipeline::read_queue(&cfg)?;
                let queue: Vec<_> = queue
                    .into_iter()
                    .filter(|q| benchmark.is_none_or(|b| q.benchmark_id == b))
                    .collect();
                match format {
                    Format::Json => print_json(&queue),
                    f => out(&render(&queue.iter().map(queue_row).collect::<Vec<_>>(), f)),
                }
            }
        },
        Command::Report => {
            let reports = pipeline::report(&cfg, benchmark)?;
            out(&render(&reports.score_support, format));
            info!("report tables written to {}", pipeline::report_dir(&cfg).display());
        }
        Command::Rank => {
            let claims = pipeline::rank(&cfg, benchmark)?;
            match format {
                Format::Json => print_json(&claims),
                f => out(&render(&evaudit::report::leaderboard_table(&claims), f)),
            }
        }
        Command::Serve { addr, token } => {
            let state = ApiState::load(&cfg, token)?;
            tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .without_time()
        .with_max_level(tracing::Level::INFO)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
