use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MistakeReport;
use crate::error::{Error, Result};
use crate::mdp::{Action, State};

/// Column names of the trace file, in order.
pub const TRACE_HEADER: [&str; 10] = [
    "t",
    "episode",
    "state",
    "action",
    "delay",
    "v_star",
    "v_pi",
    "v_tilde",
    "mistake",
    "exploration_start",
];

/// Significant digits of reals in the trace.
pub const TRACE_DIGITS: usize = 12;

/// One time step of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub episode: u64,
    pub state: State,
    pub action: Action,
    pub delay: bool,
    /// Optimal value of the current state.
    pub v_star: f64,
    /// Estimated value of the learner's policy at the current state.
    pub v_pi: f64,
    /// Value of the current policy in the optimistic model.
    pub v_tilde: f64,
    pub mistake: bool,
    pub exploration_start: bool,
}

/// `x` in plain decimal notation with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 {
            "0".to_string()
        } else {
            x.to_string()
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = |m: i32| (digits as i32 - 1 - m).max(0) as usize;
    let text = format!("{:.*}", decimals(magnitude), x);
    // rounding can carry into a new leading digit, e.g. 9.99.. -> 10.0..
    let rounded: f64 = text.parse().expect("formatted float parses");
    if rounded.abs() >= 10f64.powi(magnitude + 1) {
        format!("{:.*}", decimals(magnitude + 1), x)
    } else {
        text
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn write_rows<W: Write>(rows: &[TraceRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(TRACE_HEADER)?;
    for r in rows {
        writer.write_record([
            r.t.to_string().as_str(),
            &r.episode.to_string(),
            &r.state.to_string(),
            &r.action.to_string(),
            flag(r.delay),
            &format_significant(r.v_star, TRACE_DIGITS),
            &format_significant(r.v_pi, TRACE_DIGITS),
            &format_significant(r.v_tilde, TRACE_DIGITS),
            flag(r.mistake),
            flag(r.exploration_start),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// The trace as CSV text.
pub fn trace_to_string(rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace is ASCII")
}

/// Writes the CSV trace and the JSON report.
pub fn emit_trace(
    rows: &[TraceRow],
    report: &MistakeReport,
    trace_path: &Path,
    report_path: &Path,
) -> Result<()> {
    let file = File::create(trace_path).map_err(|e| Error::io(trace_path, e))?;
    write_rows(rows, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(trace_path, source),
        other => Error::Parse(format!("{other:?}")),
    })?;
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    json.push('\n');
    std::fs::write(report_path, json).map_err(|e| Error::io(report_path, e))
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, index: usize, line: usize) -> Result<T> {
    let raw = record.get(index).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::Parse(format!(
            "line {line}: bad {} value {raw:?}",
            TRACE_HEADER[index]
        ))
    })
}

fn parse_flag(record: &csv::StringRecord, index: usize, line: usize) -> Result<bool> {
    match record.get(index) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        other => Err(Error::Parse(format!(
            "line {line}: bad {} flag {other:?}",
            TRACE_HEADER[index]
        ))),
    }
}

/// Parses CSV text written by [`emit_trace`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = i + 2;
        rows.push(TraceRow {
            t: field(&record, 0, line)?,
            episode: field(&record, 1, line)?,
            state: field(&record, 2, line)?,
            action: field(&record, 3, line)?,
            delay: parse_flag(&record, 4, line)?,
            v_star: field(&record, 5, line)?,
            v_pi: field(&record, 6, line)?,
            v_tilde: field(&record, 7, line)?,
            mistake: parse_flag(&record, 8, line)?,
            exploration_start: parse_flag(&record, 9, line)?,
        });
    }
    Ok(rows)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}
