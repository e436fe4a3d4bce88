//! CSV trajectories and run summaries.
//!
//! Comma separated, `.` decimal point, LF line endings, one header row.
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the recorded values bit for bit.

use std::io::{Read, Write};

use serde::Serialize;

use crate::diagnostics::DiagnosticsSummary;
use crate::error::{Error, Result};
use crate::simulation::{TrajectoryRecord, TrajectorySample};
use crate::stability::StabilityReport;

/// Header row, in column order.
pub const COLUMNS: &[&str] = &[
    "t", "x", "xdot", "p", "P1", "P2", "U1", "U2", "F_hat", "F_tilde", "F_true", "zeta", "sigma", "H", "H_d", "Psi",
    "x_star",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(true)
        .from_writer(out)
}

pub fn write_csv<W: Write>(record: &TrajectoryRecord, out: W) -> Result<()> {
    let mut w = writer(out);
    if record.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for sample in record.iter() {
        w.serialize(sample)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(record: &TrajectoryRecord) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(record, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

pub fn read_csv<R: Read>(input: R) -> Result<TrajectoryRecord> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Parse {
            line: Some(1),
            key: String::new(),
            message: format!("unexpected header, expected {}", COLUMNS.join(",")),
        });
    }
    let samples = r.deserialize::<TrajectorySample>().collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryRecord { samples })
}

/// Rows of a parameter sweep written with the same dialect.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    diagnostics: &'a DiagnosticsSummary,
    stability: &'a StabilityReport,
}

/// Run summary as TOML with `[diagnostics]` and `[stability]` tables.
pub fn summary_toml(diagnostics: &DiagnosticsSummary, stability: &StabilityReport) -> String {
    toml::to_string(&Summary { diagnostics, stability }).expect("summary fields are serialisable")
}
