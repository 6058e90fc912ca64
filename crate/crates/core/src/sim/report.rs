//! CSV and dump emission for a finished run, and loaders for the same files.

use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::metrics::{CpmRow, LatencyRow, MetricsReport, RegistrationRow, ScrubSuccessRow};
use super::runner::RunOutput;
use crate::campaign::audit::{AuditReport, TraceRow};
use crate::campaign::complaint::{ComplaintClass, Verdict};
use crate::ledger::dump::{encode_dump, write_atomic};

pub const SCRUB_SUCCESS_CSV: &str = "scrub_success.csv";
pub const CPM_CSV: &str = "complaints_per_million.csv";
pub const LATENCY_CSV: &str = "preference_latency.csv";
pub const REGISTRATIONS_CSV: &str = "registrations.csv";
pub const TRACE_CSV: &str = "delivery_trace.csv";
pub const AUDITS_CSV: &str = "audits.csv";
pub const DUMP_FILE: &str = "ledger.tlch";
pub const GENESIS_FILE: &str = "genesis.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Column headers, written even when there are no rows.
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

impl CsvRow for ScrubSuccessRow {
    const HEADER: &'static [&'static str] = &[
        "campaign_id",
        "tm_id",
        "header",
        "submitted",
        "valid",
        "delivered",
        "success_rate",
        "rolling_rate",
    ];
}

impl CsvRow for CpmRow {
    const HEADER: &'static [&'static str] = &[
        "window_start",
        "window_end",
        "messages",
        "rtm_complaints",
        "utm_complaints",
        "rtm_cpm",
        "utm_cpm",
    ];
}

impl CsvRow for LatencyRow {
    const HEADER: &'static [&'static str] =
        &["height", "tick", "updates", "mean_latency", "max_latency"];
}

impl CsvRow for RegistrationRow {
    const HEADER: &'static [&'static str] = &[
        "window_start",
        "window_end",
        "telemarketers",
        "headers",
        "templates",
        "total_telemarketers",
        "total_headers",
        "total_templates",
    ];
}

impl CsvRow for TraceRow {
    const HEADER: &'static [&'static str] =
        &["campaign_id", "operator", "hashed_key", "tick", "delivered"];
}

/// One audited complaint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub complaint_id: String,
    pub class: String,
    pub verdict: String,
    /// Operator blamed by a violation verdict.
    pub operator: String,
    pub campaign_id: String,
    pub notes: String,
}

impl CsvRow for AuditRow {
    const HEADER: &'static [&'static str] = &[
        "complaint_id",
        "class",
        "verdict",
        "operator",
        "campaign_id",
        "notes",
    ];
}

pub fn class_label(c: ComplaintClass) -> &'static str {
    match c {
        ComplaintClass::Rtm => "rtm",
        ComplaintClass::Utm => "utm",
    }
}

impl AuditRow {
    pub fn from_report(r: &AuditReport) -> Self {
        let operator = match &r.verdict {
            Verdict::Violation { operator: Some(op) } => op.clone(),
            _ => String::new(),
        };
        AuditRow {
            complaint_id: r.complaint_id.clone(),
            class: class_label(r.class).into(),
            verdict: r.verdict.label().into(),
            operator,
            campaign_id: r.campaign_id.clone().unwrap_or_default(),
            notes: r.notes.clone(),
        }
    }

    pub fn insufficient(complaint_id: &str, notes: &str) -> Self {
        AuditRow {
            complaint_id: complaint_id.into(),
            class: "rtm".into(),
            verdict: "insufficient_evidence".into(),
            operator: String::new(),
            campaign_id: String::new(),
            notes: notes.into(),
        }
    }

    pub fn is_violation(&self) -> bool {
        self.verdict == "violation"
    }
}

pub fn csv_bytes<T: CsvRow>(rows: &[T]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    Ok(write_atomic(path, &csv_bytes(rows)?)?)
}

pub fn read_csv<T: CsvRow>(path: &Path) -> Result<Vec<T>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

impl MetricsReport {
    /// One CSV per series in `dir`, each replaced atomically.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join(SCRUB_SUCCESS_CSV), &self.scrub_success)?;
        write_csv(&dir.join(CPM_CSV), &self.complaints_per_million)?;
        write_csv(&dir.join(LATENCY_CSV), &self.preference_latency)?;
        write_csv(&dir.join(REGISTRATIONS_CSV), &self.registrations)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        Ok(MetricsReport {
            scrub_success: read_csv(&dir.join(SCRUB_SUCCESS_CSV))?,
            complaints_per_million: read_csv(&dir.join(CPM_CSV))?,
            preference_latency: read_csv(&dir.join(LATENCY_CSV))?,
            registrations: read_csv(&dir.join(REGISTRATIONS_CSV))?,
        })
    }
}

/// Write the dump, genesis listing, trace, audits and metrics of a run.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(DUMP_FILE), &encode_dump(&out.blocks))?;
    let genesis = serde_json::to_vec_pretty(&out.genesis).map_err(io::Error::from)?;
    write_atomic(&dir.join(GENESIS_FILE), &genesis)?;
    write_csv(&dir.join(TRACE_CSV), &out.trace)?;
    write_csv(&dir.join(AUDITS_CSV), &out.audits)?;
    out.metrics.write(&dir.join("metrics"))?;
    Ok(())
}
