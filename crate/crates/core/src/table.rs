//! CSV tables.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64` (never more than 17 significant digits), e.g. `1.0`, `0.0`,
//! `6.0936848442879715`. Rows end with `\n`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sweep::{RunRecord, SweepPoint};

pub const ECHO_HEADER: [&str; 8] = ["t", "re_nu", "im_nu", "abs_nu", "volume", "n_plus", "n_minus", "ratio"];
pub const SUMMARY_HEADER: [&str; 3] = ["axis_value", "n_v", "wall_time_s"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("nothing to write")]
    Empty,
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
}

/// Round-trip rendering of a float.
pub fn render(x: f64) -> String {
    format!("{x:?}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// ν(t), |A_t| and the expansion/contraction traces of one run.
pub fn write_echo_table<W: Write>(record: &RunRecord, w: W) -> Result<(), TableError> {
    let mut out = writer(w);
    out.write_record(ECHO_HEADER)?;
    let report = &record.report;
    for (i, nu) in record.echo.values.iter().enumerate() {
        let row = [
            record.echo.grid.time(i),
            nu.re,
            nu.im,
            nu.norm(),
            record.volumes.volumes[i],
            report.n_plus[i],
            report.n_minus[i],
            report.ratio[i],
        ];
        out.write_record(row.map(render))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per successful point, ascending in the axis value.
pub fn write_summary<W: Write>(points: &[SweepPoint], w: W) -> Result<(), TableError> {
    let mut rows: Vec<_> = points
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok().map(|r| (p.axis_value, r)))
        .collect();
    if rows.is_empty() {
        return Err(TableError::Empty);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for (value, record) in rows {
        out.write_record([value, record.report.n_v, record.wall_time].map(render))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, TableError> {
    File::create(path).map(BufWriter::new).map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_echo_csv(record: &RunRecord, path: &Path) -> Result<(), TableError> {
    write_echo_table(record, create(path)?)
}

pub fn emit_summary_csv(points: &[SweepPoint], path: &Path) -> Result<(), TableError> {
    write_summary(points, create(path)?)
}

/// One parsed line of an echo table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoRow {
    pub t: f64,
    pub re_nu: f64,
    pub im_nu: f64,
    pub abs_nu: f64,
    pub volume: f64,
    pub n_plus: f64,
    pub n_minus: f64,
    pub ratio: f64,
}

pub fn read_echo_table<R: Read>(r: R) -> Result<Vec<EchoRow>, TableError> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != ECHO_HEADER {
        return Err(TableError::Malformed {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut cols = [0.0; 8];
        for (c, field) in record.iter().enumerate().take(8) {
            cols[c] = field.parse().map_err(|e| TableError::Malformed {
                row: i + 1,
                message: format!("column {}: {e}", ECHO_HEADER[c]),
            })?;
        }
        let [t, re_nu, im_nu, abs_nu, volume, n_plus, n_minus, ratio] = cols;
        rows.push(EchoRow {
            t,
            re_nu,
            im_nu,
            abs_nu,
            volume,
            n_plus,
            n_minus,
            ratio,
        });
    }
    Ok(rows)
}
