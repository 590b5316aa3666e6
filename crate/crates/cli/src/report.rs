//! Simulation-study report CSV.

use std::io::Write;

use probit_ep::{StudyReport, StudyRow};

use crate::error::{CliError, CliResult};
use crate::format::fmt_sig;

pub const REPORT_HEADER: [&str; 9] = [
    "scenario",
    "p",
    "median_abs_diff",
    "q1",
    "q3",
    "ep_seconds",
    "baseline_seconds",
    "ep_sweeps",
    "skipped_updates",
];

/// Columns that hold wall-clock times and so differ between identical runs.
pub const TIMING_COLUMNS: [&str; 2] = ["ep_seconds", "baseline_seconds"];

pub const DIFFS_HEADER: [&str; 4] = ["scenario", "p", "unit", "abs_diff"];

fn record(row: &StudyRow) -> [String; 9] {
    [
        row.scenario.name().to_string(),
        row.p.to_string(),
        fmt_sig(row.median_abs_diff),
        fmt_sig(row.q1),
        fmt_sig(row.q3),
        fmt_sig(row.ep_seconds),
        fmt_sig(row.baseline_seconds),
        row.ep_sweeps.to_string(),
        row.skipped_updates.to_string(),
    ]
}

fn failed(e: csv::Error) -> CliError {
    CliError::Invalid(format!("cannot write report: {e}"))
}

pub fn write_report<W: Write>(report: &StudyReport, writer: W) -> CliResult<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(REPORT_HEADER).map_err(failed)?;
    for row in &report.rows {
        csv.write_record(record(row)).map_err(failed)?;
    }
    csv.flush().map_err(|e| CliError::Invalid(format!("cannot write report: {e}")))
}

/// One line per test unit with its absolute EP-baseline gap.
pub fn write_diffs<W: Write>(report: &StudyReport, writer: W) -> CliResult<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(DIFFS_HEADER).map_err(failed)?;
    for row in &report.rows {
        for (unit, d) in row.abs_diffs.iter().enumerate() {
            csv.write_record([
                row.scenario.name().to_string(),
                row.p.to_string(),
                (unit + 1).to_string(),
                fmt_sig(*d),
            ])
            .map_err(failed)?;
        }
    }
    csv.flush().map_err(|e| CliError::Invalid(format!("cannot write report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use probit_ep::Scenario;

    fn row(p: usize) -> StudyRow {
        StudyRow {
            scenario: Scenario::Sparse,
            p,
            median_abs_diff: 0.001,
            q1: 0.0005,
            q3: 0.002,
            ep_seconds: 0.0123,
            fit_seconds: 0.01,
            predict_seconds: 0.0023,
            baseline_seconds: 1.5,
            ep_sweeps: 6,
            skipped_updates: 0,
            converged: true,
            engine: "dense",
            abs_diffs: vec![0.0005, 0.001, 0.002],
            baseline_max_se: 0.003,
        }
    }

    #[test]
    fn report_layout() {
        let report = StudyReport {
            rows: vec![row(50), row(100)],
        };
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "scenario,p,median_abs_diff,q1,q3,ep_seconds,baseline_seconds,ep_sweeps,skipped_updates"
        );
        assert_eq!(
            lines[1],
            "sparse,50,0.00100000000000,0.000500000000000,0.00200000000000,0.0123000000000,1.50000000000,6,0"
        );
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn diffs_layout() {
        let report = StudyReport { rows: vec![row(50)] };
        let mut buf = Vec::new();
        write_diffs(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("\nsparse,50,3,0.00200000000000\n"));
    }
}
