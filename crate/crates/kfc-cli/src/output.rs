//! Machine-readable outputs: per-round CSV and per-experiment summary JSON.
//!
//! The CSV schema is stable across architectures and attacks:
//!
//!   round,architecture,original_acc,backdoor_acc,validation_acc,winner_miner,acc10_running
//!
//! Floats are written with Rust's shortest round-trip formatting and a `.`
//! decimal separator; absent values (backdoor column outside backdoor runs,
//! winner column without a ledger) are empty fields. `acc10_running` at row
//! `t` is the mean reported accuracy over rounds `max(1, t-9)..=t` of the
//! same architecture.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kfc_core::sim::{Architecture, MetricsSeries};

pub const CSV_HEADER: &str =
    "round,architecture,original_acc,backdoor_acc,validation_acc,winner_miner,acc10_running";

/// One run of an experiment: an architecture and its per-round series.
#[derive(Clone, Debug)]
pub struct ArchRun {
    pub architecture: Architecture,
    pub series: MetricsSeries,
}

/// One emitted CSV data row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub round: usize,
    pub architecture: String,
    pub original_acc: f64,
    pub backdoor_acc: Option<f64>,
    pub validation_acc: f64,
    pub winner_miner: Option<usize>,
    pub acc10_running: f64,
}

/// Flatten runs into CSV rows, computing the running 10-round mean per
/// architecture.
pub fn rows_from_runs(runs: &[ArchRun]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for run in runs {
        let accuracies: Vec<f64> = run
            .series
            .rounds
            .iter()
            .map(|r| r.reported.original)
            .collect();
        for (i, round) in run.series.rounds.iter().enumerate() {
            let window_start = i.saturating_sub(9);
            let window = &accuracies[window_start..=i];
            rows.push(CsvRow {
                round: round.round,
                architecture: run.architecture.name().to_string(),
                original_acc: round.reported.original,
                backdoor_acc: round.reported.backdoor,
                validation_acc: round.reported.validation,
                winner_miner: round.winner_miner,
                acc10_running: window.iter().sum::<f64>() / window.len() as f64,
            });
        }
    }
    rows
}

fn format_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write rows as UTF-8 CSV with a header and one line per round.
pub fn write_rounds_csv(path: &Path, rows: &[CsvRow]) -> std::io::Result<()> {
    let mut out = Vec::with_capacity(64 * (rows.len() + 1));
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.round,
            row.architecture,
            row.original_acc,
            format_opt_f64(row.backdoor_acc),
            row.validation_acc,
            row.winner_miner.map(|w| w.to_string()).unwrap_or_default(),
            row.acc10_running,
        )?;
    }
    std::fs::write(path, out)
}

/// Parse a CSV produced by [`write_rounds_csv`] back into rows.
pub fn parse_rounds_csv(path: &Path) -> Result<Vec<CsvRow>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format!("row {}: expected 7 fields, got {}", i + 2, fields.len()));
        }
        let parse_f64 =
            |s: &str| -> Result<f64, String> { s.parse().map_err(|e| format!("row {}: {e}", i + 2)) };
        rows.push(CsvRow {
            round: fields[0]
                .parse()
                .map_err(|e| format!("row {}: {e}", i + 2))?,
            architecture: fields[1].to_string(),
            original_acc: parse_f64(fields[2])?,
            backdoor_acc: if fields[3].is_empty() {
                None
            } else {
                Some(parse_f64(fields[3])?)
            },
            validation_acc: parse_f64(fields[4])?,
            winner_miner: if fields[5].is_empty() {
                None
            } else {
                Some(
                    fields[5]
                        .parse()
                        .map_err(|e| format!("row {}: {e}", i + 2))?,
                )
            },
            acc10_running: parse_f64(fields[6])?,
        });
    }
    Ok(rows)
}

/// Final and last-ten-round accuracy of one task.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Serialize)]
pub struct MetricPair {
    pub accuracy: f64,
    pub accuracy_10: f64,
}

/// Per-architecture summary of one experiment.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct ArchSummary {
    pub original: MetricPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backdoor: Option<MetricPair>,
}

/// The `<experiment>.summary.json` document.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub experiment: String,
    pub master_seed: u64,
    pub architectures: BTreeMap<String, ArchSummary>,
}

/// Build the summary for one experiment's runs.
pub fn summarize(experiment: &str, master_seed: u64, runs: &[ArchRun]) -> SummaryFile {
    let mut architectures = BTreeMap::new();
    for run in runs {
        let original = MetricPair {
            accuracy: run.series.final_accuracy().unwrap_or(0.0),
            accuracy_10: run.series.accuracy_10().unwrap_or(0.0),
        };
        let backdoor = match (
            run.series.final_backdoor_accuracy(),
            run.series.backdoor_accuracy_10(),
        ) {
            (Some(accuracy), Some(accuracy_10)) => Some(MetricPair {
                accuracy,
                accuracy_10,
            }),
            _ => None,
        };
        architectures.insert(
            run.architecture.name().to_string(),
            ArchSummary { original, backdoor },
        );
    }
    SummaryFile {
        schema_version: crate::config::SCHEMA_VERSION,
        experiment: experiment.to_string(),
        master_seed,
        architectures,
    }
}

pub fn write_summary_json(path: &Path, summary: &SummaryFile) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(summary).expect("summary serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}
