//! Dataset CSV files: a header row, then one row per observation with the
//! label `y ∈ {0, 1}` in the first column and the `p` covariates after it. No
//! intercept column is added.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use probit_ep::Dataset;

use crate::error::{CliError, CliResult};
use crate::format::fmt_sig;

/// Parsed table of numbers with header names.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    /// Line number of each data row, for label errors.
    lines: Vec<u64>,
}

fn parse_error(path: &Path, line: u64, column: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn read_table<R: Read>(reader: R, path: &Path) -> CliResult<Table> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_error(path, 1, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                parse_error(path, line, j + 1, format!("`{field}` is not a number"))
            })?;
            if !value.is_finite() {
                return Err(parse_error(path, line, j + 1, format!("`{field}` is not finite")));
            }
            row.push(value);
        }
        rows.push(row);
        lines.push(line);
    }
    Ok(Table { header, rows, lines })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_error(
            path,
            line,
            (*len).min(*expected_len) as usize + 1,
            format!("expected {expected_len} fields, found {len}"),
        ),
        csv::ErrorKind::Io(_) => CliError::Invalid(format!("{}: {e}", path.display())),
        _ => parse_error(path, line, 1, e.to_string()),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Reads a dataset file. `path` is used in error messages only.
pub fn parse_dataset<R: Read>(reader: R, path: &Path, prior_variance: f64) -> CliResult<Dataset> {
    let table = read_table(reader, path)?;
    if table.header.len() < 2 {
        return Err(parse_error(
            path,
            1,
            table.header.len() + 1,
            "need a label column followed by at least one covariate column",
        ));
    }
    if table.rows.is_empty() {
        return Err(parse_error(path, 2, 1, "no observations"));
    }
    let (n, p) = (table.rows.len(), table.header.len() - 1);
    let mut y = Vec::with_capacity(n);
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        match row[0] {
            v if v == 0.0 => y.push(0),
            v if v == 1.0 => y.push(1),
            v => {
                return Err(parse_error(
                    path,
                    line,
                    1,
                    format!("label must be 0 or 1, found {v} (observation {})", y.len() + 1),
                ))
            }
        }
    }
    let x = DMatrix::from_fn(n, p, |i, j| table.rows[i][j + 1]);
    Dataset::new(x, y, prior_variance).map_err(CliError::from)
}

pub fn read_dataset(path: &Path, prior_variance: f64) -> CliResult<Dataset> {
    parse_dataset(open(path)?, path, prior_variance)
}

/// Reads test covariates: either `p` covariate columns, or a full dataset file
/// whose first column is headed `y` (the labels are ignored).
pub fn read_covariates(path: &Path, p: usize) -> CliResult<DMatrix<f64>> {
    parse_covariates(open(path)?, path, p)
}

pub fn parse_covariates<R: Read>(reader: R, path: &Path, p: usize) -> CliResult<DMatrix<f64>> {
    let table = read_table(reader, path)?;
    let width = table.header.len();
    let skip = if width == p + 1 && table.header[0].eq_ignore_ascii_case("y") {
        1
    } else if width == p {
        0
    } else {
        return Err(CliError::Core(probit_ep::Error::DimensionMismatch {
            expected: p,
            found: width,
        }));
    };
    let rows = table.rows.len();
    Ok(DMatrix::from_fn(rows, p, |i, j| table.rows[i][j + skip]))
}

/// Writes a dataset in the format read by [`read_dataset`]. Values are written
/// with Rust's shortest round-trip representation so the file parses back to
/// the identical dataset.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> CliResult<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    csv.write_record(&header).map_err(write_error)?;
    for i in 0..data.n() {
        let mut record = vec![data.labels()[i].to_string()];
        record.extend(data.row(i).iter().map(|v| format!("{v:?}")));
        csv.write_record(&record).map_err(write_error)?;
    }
    csv.flush().map_err(|e| CliError::Invalid(e.to_string()))
}

/// Writes covariates with an `x1..xp` header, 12 significant digits.
pub fn write_covariates<W: Write>(x: &DMatrix<f64>, writer: W) -> CliResult<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    csv.write_record(&header).map_err(write_error)?;
    for i in 0..x.nrows() {
        let record: Vec<String> = (0..x.ncols()).map(|j| fmt_sig(x[(i, j)])).collect();
        csv.write_record(&record).map_err(write_error)?;
    }
    csv.flush().map_err(|e| CliError::Invalid(e.to_string()))
}

fn write_error(e: csv::Error) -> CliError {
    CliError::Invalid(format!("write failed: {e}"))
}
