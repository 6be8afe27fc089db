//! Versioned CSV serialization of traces.
//!
//! Header and footer lines start with `# ` and carry `key: value` metadata;
//! the body is one row per iteration record. Floats are written in their
//! shortest round-trip form, so a parsed trace reproduces the records
//! exactly.

use std::fmt::Write as _;

use crate::algorithms::{IterationRecord, Trace};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "jspvqa-trace v1";

pub const COLUMNS: [&str; 9] = [
    "iteration",
    "evaluations",
    "objective",
    "epsilon_exact",
    "pgs_exact",
    "mean_energy_sampled",
    "tau",
    "grad_norm",
    "wall_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

pub fn format_row(r: &IterationRecord) -> String {
    format!(
        "{},{},{:?},{:?},{:?},{},{},{},{}",
        r.iteration,
        r.evaluations,
        r.objective,
        r.epsilon,
        r.pgs,
        opt(r.mean_energy_sampled),
        opt(r.tau),
        opt(r.grad_norm),
        opt(r.wall_ms),
    )
}

fn header(trace: &Trace) -> String {
    let c = &trace.config;
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(out, "# algorithm: {}", c.algorithm);
    let _ = writeln!(out, "# iteration_unit: {}", c.algorithm.iteration_unit());
    let _ = writeln!(out, "# fingerprint: {}", trace.fingerprint);
    let _ = writeln!(out, "# rescale: {}", c.rescale.name());
    let _ = writeln!(out, "# config: {}", c.describe());
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    out
}

/// CSV text for a completed trace.
pub fn to_csv(trace: &Trace) -> String {
    let mut out = header(trace);
    for r in &trace.records {
        out.push_str(&format_row(r));
        out.push('\n');
    }
    let _ = writeln!(out, "# termination: {}", trace.termination);
    let _ = writeln!(out, "# final_epsilon: {:?}", trace.final_epsilon);
    let _ = writeln!(out, "# final_pgs: {:?}", trace.final_pgs);
    let params: Vec<String> = trace.final_params.iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(out, "# final_params: {}", params.join(" "));
    out
}

/// CSV text for a run that failed after emitting `records`.
pub fn to_truncated_csv(trace: &Trace, reason: &str) -> String {
    let mut out = header(trace);
    for r in &trace.records {
        out.push_str(&format_row(r));
        out.push('\n');
    }
    let _ = writeln!(out, "# truncated: {}", reason.replace('\n', " "));
    out
}

/// A CSV trace read back from text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTrace {
    /// `key: value` comment lines in file order.
    pub metadata: Vec<(String, String)>,
    pub records: Vec<IterationRecord>,
}

impl ParsedTrace {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_truncated(&self) -> bool {
        self.get("truncated").is_some()
    }
}

fn parse_cell<T: std::str::FromStr>(cell: &str, column: &str, line: usize) -> Result<T> {
    cell.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {column} value `{cell}`")))
}

fn parse_opt(cell: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(cell, column, line).map(Some)
    }
}

pub fn parse_row(row: &str, line: usize) -> Result<IterationRecord> {
    let cells: Vec<&str> = row.split(',').collect();
    if cells.len() != COLUMNS.len() {
        return Err(Error::Parse(format!(
            "line {line}: expected {} columns, found {}",
            COLUMNS.len(),
            cells.len()
        )));
    }
    Ok(IterationRecord {
        iteration: parse_cell(cells[0], COLUMNS[0], line)?,
        evaluations: parse_cell(cells[1], COLUMNS[1], line)?,
        objective: parse_cell(cells[2], COLUMNS[2], line)?,
        epsilon: parse_cell(cells[3], COLUMNS[3], line)?,
        pgs: parse_cell(cells[4], COLUMNS[4], line)?,
        mean_energy_sampled: parse_opt(cells[5], COLUMNS[5], line)?,
        tau: parse_opt(cells[6], COLUMNS[6], line)?,
        grad_norm: parse_opt(cells[7], COLUMNS[7], line)?,
        wall_ms: parse_opt(cells[8], COLUMNS[8], line)?,
    })
}

pub fn parse_csv(text: &str) -> Result<ParsedTrace> {
    let mut parsed = ParsedTrace::default();
    let mut seen_columns = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(comment) = line.strip_prefix("# ") {
            if comment == FORMAT_VERSION {
                parsed.metadata.push(("version".into(), comment.into()));
            } else if let Some((k, v)) = comment.split_once(": ") {
                parsed.metadata.push((k.into(), v.into()));
            } else if let Some(k) = comment.strip_suffix(':') {
                parsed.metadata.push((k.into(), String::new()));
            }
        } else if !seen_columns {
            if line != COLUMNS.join(",") {
                return Err(Error::Parse(format!("line {n}: unexpected column header")));
            }
            seen_columns = true;
        } else if !line.is_empty() {
            parsed.records.push(parse_row(line, n)?);
        }
    }
    if parsed.get("version") != Some(FORMAT_VERSION) {
        return Err(Error::Parse(format!("missing `{FORMAT_VERSION}` header")));
    }
    if !seen_columns {
        return Err(Error::Parse("missing column header".into()));
    }
    Ok(parsed)
}
