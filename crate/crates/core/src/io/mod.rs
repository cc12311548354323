//! File formats: calibration tables, scenario configs, traces, images, the
//! model container and reports.
//!
//! Every loader has a `parse_*` twin working on in-memory text or bytes;
//! `source_name` only labels error messages.

mod calibration;
mod modelfile;
mod netpbm;
pub mod report;
mod scenario;
mod tables;
mod traces;

use std::path::Path;
use std::str::FromStr;

pub use calibration::{
    load_calibration, load_sensors, parse_calibration, parse_sensors, write_calibration, CALIBRATION_HEADER,
    DEFAULT_CALIBRATION, DEFAULT_SENSORS, SENSORS_HEADER,
};
pub use modelfile::{load_model, parse_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use netpbm::{encode_pgm, encode_ppm, load_pgm, load_ppm, parse_pgm, parse_ppm, Pgm};
pub use report::{emit_ledger, emit_report, parse_report, Report, ReportFormat, ReportRow};
pub use scenario::{load_scenario, parse_scenario, Scenario, DEFAULT_SCENARIO, SWEEP_SCENARIO};
pub use tables::{write_detections, write_plan, DetectionRow, DETECTIONS_HEADER, PLAN_HEADER};
pub use traces::{load_occupancy, parse_occupancy, parse_trace, write_trace, OCCUPANCY_HEADER, TRACE_HEADER};

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// CSV rows checked against a fixed header. Lines starting with `#` are
/// comments.
pub(crate) struct CsvTable {
    source_name: String,
    rows: Vec<(usize, csv::StringRecord)>,
    header: &'static [&'static str],
}

impl CsvTable {
    pub(crate) fn parse(text: &str, source_name: &str, header: &'static [&'static str]) -> Result<Self> {
        let schema = |line: usize, column: &str, message: String| Error::Schema {
            source_name: source_name.to_string(),
            line,
            column: column.to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let first = match records.next() {
            None => {
                return Err(schema(
                    1,
                    "header",
                    format!("empty file, expected `{}`", header.join(",")),
                ))
            }
            Some(r) => r.map_err(|e| schema(csv_line(&e), "header", e.to_string()))?,
        };
        let found: Vec<&str> = first.iter().collect();
        if found != header {
            let line = first.position().map_or(1, |p| p.line() as usize);
            let column = found
                .iter()
                .zip(header.iter())
                .find(|(a, b)| a != b)
                .map_or_else(|| "header".to_string(), |(a, _)| (*a).to_string());
            return Err(schema(
                line,
                &column,
                format!("header `{}` does not match `{}`", found.join(","), header.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for r in records {
            let r = r.map_err(|e| schema(csv_line(&e), "row", e.to_string()))?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            if r.len() != header.len() {
                return Err(schema(
                    line,
                    "row",
                    format!("expected {} fields, found {}", header.len(), r.len()),
                ));
            }
            rows.push((line, r));
        }
        Ok(Self {
            source_name: source_name.to_string(),
            rows,
            header,
        })
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }

    pub(crate) fn schema_error(&self, line: usize, column: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            source_name: self.source_name.clone(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

pub(crate) struct Row<'a> {
    table: &'a CsvTable,
    pub(crate) line: usize,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    pub(crate) fn str(&self, column: &str) -> &str {
        let idx = self
            .table
            .header
            .iter()
            .position(|h| *h == column)
            .expect("column is part of the header");
        &self.record[idx]
    }

    pub(crate) fn get<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(column);
        raw.parse()
            .map_err(|e| self.error(column, format!("cannot parse `{raw}`: {e}")))
    }

    pub(crate) fn error(&self, column: &str, message: impl Into<String>) -> Error {
        self.table.schema_error(self.line, column, message)
    }
}
