//! CSV and JSON-lines persistence of per-BEP rows, candidate traces and
//! coincidence histograms.
//!
//! Floating-point values are written with 17 significant digits
//! (`{:.16e}`), which round-trips every f64. Optional values are an empty
//! CSV field or JSON `null`. No timestamps are written, so identical inputs
//! give identical bytes.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::attack::CandidateTrace;
use crate::error::{KljnError, Result};
use crate::harness::{BepRow, CoincidenceHistogram};

/// Column order of the per-BEP CSV.
pub const CSV_COLUMNS: [&str; 11] = [
    "bep_index",
    "choice_a",
    "choice_b",
    "level_class",
    "mean_square_V2",
    "eve_mode",
    "r_a_hat_ohm",
    "r_b_hat_ohm",
    "eve_correct",
    "samples_to_decision",
    "waiting_samples",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    JsonLines,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::JsonLines => "jsonl",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ExportFormat {
    type Err = KljnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ExportFormat::JsonLines),
            _ => Err(KljnError::invalid(
                "format",
                format!("expected csv or jsonl, got {s:?}"),
            )),
        }
    }
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_fields(row: &BepRow) -> [String; 11] {
    [
        row.bep_index.to_string(),
        row.choice_a.to_string(),
        row.choice_b.to_string(),
        row.level_class.to_string(),
        format_f64(row.mean_square),
        opt(row.eve_mode),
        opt(row.r_a_hat.map(format_f64)),
        opt(row.r_b_hat.map(format_f64)),
        opt(row.eve_correct),
        opt(row.samples_to_decision),
        opt(row.waiting_samples),
    ]
}

fn raw(x: f64) -> Option<Box<RawValue>> {
    x.is_finite()
        .then(|| RawValue::from_string(format_f64(x)).expect("formatted f64 is valid JSON"))
}

#[derive(Serialize)]
struct JsonRow {
    bep_index: usize,
    choice_a: crate::config::Resistor,
    choice_b: crate::config::Resistor,
    level_class: crate::protocol::LevelClass,
    #[serde(rename = "mean_square_V2")]
    mean_square: Option<Box<RawValue>>,
    eve_mode: Option<crate::attack::AttackMode>,
    r_a_hat_ohm: Option<Box<RawValue>>,
    r_b_hat_ohm: Option<Box<RawValue>>,
    eve_correct: Option<bool>,
    samples_to_decision: Option<usize>,
    waiting_samples: Option<usize>,
}

impl From<&BepRow> for JsonRow {
    fn from(r: &BepRow) -> Self {
        JsonRow {
            bep_index: r.bep_index,
            choice_a: r.choice_a,
            choice_b: r.choice_b,
            level_class: r.level_class,
            mean_square: raw(r.mean_square),
            eve_mode: r.eve_mode,
            r_a_hat_ohm: r.r_a_hat.and_then(raw),
            r_b_hat_ohm: r.r_b_hat.and_then(raw),
            eve_correct: r.eve_correct,
            samples_to_decision: r.samples_to_decision,
            waiting_samples: r.waiting_samples,
        }
    }
}

fn io_err(e: std::io::Error) -> KljnError {
    KljnError::io("<writer>", e)
}

pub fn write_records<W: Write>(rows: &[BepRow], out: W, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let wrap = |e| KljnError::Csv {
                path: "<writer>".into(),
                source: e,
            };
            w.write_record(CSV_COLUMNS).map_err(wrap)?;
            for row in rows {
                w.write_record(csv_fields(row)).map_err(wrap)?;
            }
            w.flush().map_err(io_err)?;
        }
        ExportFormat::JsonLines => {
            let mut out = out;
            for row in rows {
                let line = serde_json::to_string(&JsonRow::from(row)).expect("row serializes");
                writeln!(out, "{line}").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

fn with_path(path: &Path, e: KljnError) -> KljnError {
    match e {
        KljnError::Io { source, .. } => KljnError::io(path, source),
        KljnError::Csv { source, .. } => KljnError::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| KljnError::io(path, e))
}

pub fn export_records(rows: &[BepRow], path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let path = path.as_ref();
    write_records(rows, create(path)?, format).map_err(|e| with_path(path, e))
}

pub fn read_json_lines(path: impl AsRef<Path>) -> Result<Vec<BepRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| KljnError::io(path, e))?;
    let mut rows = vec![];
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| KljnError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|source| KljnError::Json {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(rows)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BepRow>> {
    let path = path.as_ref();
    let wrap = |source| KljnError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().map(|row| row.map_err(wrap)).collect()
}

/// Two-column `sample_index,estimate_ohm` CSV for one candidate.
pub fn write_candidate_trace<W: Write>(trace: &CandidateTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e| KljnError::Csv {
        path: "<writer>".into(),
        source: e,
    };
    w.write_record(["sample_index", "estimate_ohm"])
        .map_err(wrap)?;
    for &(k, r) in &trace.estimates {
        w.write_record([k.to_string(), format_f64(r)])
            .map_err(wrap)?;
    }
    w.flush().map_err(io_err)
}

pub fn export_candidate_trace(trace: &CandidateTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_candidate_trace(trace, create(path)?).map_err(|e| with_path(path, e))
}

/// Several labeled candidates in one long-format CSV:
/// `candidate,sample_index,estimate_ohm`, one row per usable sample.
pub fn write_candidate_traces<W: Write>(traces: &[(&str, &CandidateTrace)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e| KljnError::Csv {
        path: "<writer>".into(),
        source: e,
    };
    w.write_record(["candidate", "sample_index", "estimate_ohm"])
        .map_err(wrap)?;
    for (label, trace) in traces {
        for &(k, r) in &trace.estimates {
            w.write_record([label.to_string(), k.to_string(), format_f64(r)])
                .map_err(wrap)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn export_candidate_traces(
    traces: &[(&str, &CandidateTrace)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    write_candidate_traces(traces, create(path)?).map_err(|e| with_path(path, e))
}

/// `run_length,count,expected` rows; `expected` is runs·(1 − p₀)·p₀^k.
pub fn write_histogram<W: Write>(h: &CoincidenceHistogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e| KljnError::Csv {
        path: "<writer>".into(),
        source: e,
    };
    w.write_record(["run_length", "count", "expected"])
        .map_err(wrap)?;
    let p = h.expected_ratio;
    for (k, &c) in h.counts.iter().enumerate() {
        let expected = h.runs as f64 * (1.0 - p) * p.powi(k as i32);
        w.write_record([k.to_string(), c.to_string(), format_f64(expected)])
            .map_err(wrap)?;
    }
    w.flush().map_err(io_err)
}

pub fn export_histogram(h: &CoincidenceHistogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_histogram(h, create(path)?).map_err(|e| with_path(path, e))
}

/// Pretty-printed JSON of any summary value, newline-terminated.
pub fn export_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(|e| KljnError::io(path, e))
}
