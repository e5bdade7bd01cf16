//! Gap reports in JSON, CSV and plain-text table form. All three render the
//! same rows; the JSON carries a schema tag so readers can reject versions
//! they do not know.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::relax::Relaxation;
use crate::sdpbt::{GapReport, RunStatus, UpperBound, UpperBoundSource};

pub const REPORT_SCHEMA: &str = "acopf-tighten.report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Root,
    Tighten,
    Ablate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub relaxation: Relaxation,
    pub upper_bound: UpperBound,
    pub result: GapReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: Command,
    pub case: String,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "table" | "pretty" => Ok(Format::Table),
            _ => Err(format!("unknown format `{s}` (json, csv, table)")),
        }
    }
}

const CSV_HEADER: &str = "case,relaxation,root_gap,final_gap,root_lower_bound,lower_bound,upper_bound,upper_bound_source,iterations,subproblems_solved,subproblem_failures,status,wall_time";

fn source_label(s: &UpperBoundSource) -> &'static str {
    match s {
        UpperBoundSource::Given => "given",
        UpperBoundSource::KnownSolutions { .. } => "known_solutions",
        UpperBoundSource::MultiStart { .. } => "multistart",
    }
}

fn status_label(s: RunStatus) -> &'static str {
    match s {
        RunStatus::GapClosed => "gap_closed",
        RunStatus::DomainsClosed => "domains_closed",
        RunStatus::IterationLimit => "iteration_limit",
        RunStatus::TimeLimit => "time_limit",
        RunStatus::RootOnly => "root_only",
    }
}

impl Report {
    pub fn new(command: Command, case: &str) -> Self {
        Report {
            schema: REPORT_SCHEMA.to_string(),
            command,
            case: case.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports hold finite numbers")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: Report = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if r.schema != REPORT_SCHEMA {
            return Err(format!("unsupported report schema `{}`", r.schema));
        }
        Ok(r)
    }

    /// One line per row. Numbers use the shortest representation that
    /// reads back to the same `f64`, as in the JSON.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let g = &row.result;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.case,
                row.relaxation,
                g.root_gap,
                g.final_gap,
                g.root_lower_bound,
                g.lower_bound,
                g.upper_bound,
                source_label(&row.upper_bound.source),
                g.iterations,
                g.subproblems_solved,
                g.subproblem_failures,
                status_label(g.status),
                g.wall_time
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({:?})", self.case, self.command);
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>9} {:>14} {:>14} {:>5} {:>9} {:>16}",
            "relax", "root gap", "gap", "lower", "upper", "iter", "time (s)", "status"
        );
        for row in &self.rows {
            let g = &row.result;
            let _ = writeln!(
                out,
                "{:<10} {:>8.2}% {:>8.2}% {:>14.4} {:>14.4} {:>5} {:>9.2} {:>16}",
                row.relaxation.label(),
                g.root_gap,
                g.final_gap,
                g.lower_bound,
                g.upper_bound,
                g.iterations,
                g.wall_time,
                status_label(g.status)
            );
        }
        for row in self.rows.iter().filter(|r| r.result.trace.len() > 1) {
            let _ = writeln!(out, "\n{} trace", row.relaxation.label());
            for t in &row.result.trace {
                let _ = writeln!(
                    out,
                    "  iter {:>3} {:>14.4} {:>8.3}% open {:>5} solved {:>5} failed {:>3} {:>9.2}s",
                    t.iteration, t.lower_bound, t.gap, t.open, t.subproblems, t.failures, t.elapsed
                );
            }
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
            Format::Table => self.to_table(),
        }
    }
}
