//! Sweep reports and energy breakdowns, as CSV or aligned text.
//!
//! Numbers are stored already rounded to the precision they are printed
//! with, so a CSV report parses back to an identical [`Report`]. Metadata
//! lines read `# key=value`.

use std::fmt::Write as _;
use std::str::FromStr;

use super::CsvTable;
use crate::energy::EnergyLedger;
use crate::error::{Error, Result};
use crate::sim::LifetimeRow;

pub const REPORT_HEADER: [&str; 9] = [
    "resolution",
    "map50",
    "map5095",
    "energy_per_frame_mj",
    "efficiency_pp_per_mj",
    "per_sample_mj",
    "average_power_mw",
    "lifetime_days",
    "flags",
];

/// Decimal places per column, after `resolution`.
const PRECISION: [usize; 7] = [1, 1, 4, 3, 4, 4, 2];

pub const BEST_EFFICIENCY: &str = "best-efficiency";
pub const ASSUMPTION: &str = "assumption";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            _ => Err(Error::domain(format!("unknown report format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub resolution: u32,
    pub map50: f64,
    pub map5095: f64,
    pub energy_per_frame_mj: f64,
    pub efficiency_pp_per_mj: f64,
    pub per_sample_mj: f64,
    pub average_power_mw: f64,
    pub lifetime_days: f64,
    pub flags: Vec<String>,
}

impl ReportRow {
    fn values(&self) -> [f64; 7] {
        [
            self.map50,
            self.map5095,
            self.energy_per_frame_mj,
            self.efficiency_pp_per_mj,
            self.per_sample_mj,
            self.average_power_mw,
            self.lifetime_days,
        ]
    }

    fn cells(&self) -> Vec<String> {
        let mut cells = vec![self.resolution.to_string()];
        cells.extend(self.values().iter().zip(PRECISION).map(|(v, p)| format!("{v:.p$}")));
        cells.push(self.flags.join("|"));
        cells
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

fn round_to(v: f64, places: usize) -> f64 {
    format!("{v:.places$}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Round sweep rows to report precision. `assumption_derived` marks the
    /// per-sample columns as resting on calibrated assumptions.
    pub fn from_lifetime_rows(rows: &[LifetimeRow], assumption_derived: bool) -> Self {
        let rows = rows
            .iter()
            .map(|r| {
                let mut flags = Vec::new();
                if r.best_efficiency {
                    flags.push(BEST_EFFICIENCY.to_string());
                }
                if assumption_derived {
                    flags.push(ASSUMPTION.to_string());
                }
                let v = [
                    r.map50,
                    r.map5095,
                    r.energy_per_frame_mj,
                    r.efficiency_pp_per_mj,
                    r.per_sample_mj,
                    r.average_power_mw,
                    r.lifetime_days,
                ]
                .iter()
                .zip(PRECISION)
                .map(|(v, p)| round_to(*v, p))
                .collect::<Vec<_>>();
                ReportRow {
                    resolution: r.resolution,
                    map50: v[0],
                    map5095: v[1],
                    energy_per_frame_mj: v[2],
                    efficiency_pp_per_mj: v[3],
                    per_sample_mj: v[4],
                    average_power_mw: v[5],
                    lifetime_days: v[6],
                    flags,
                }
            })
            .collect();
        Self {
            metadata: Vec::new(),
            rows,
        }
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.push((key.to_string(), value.into()));
        self
    }

    pub fn metadata(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn best(&self) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.has_flag(BEST_EFFICIENCY))
    }
}

fn check_metadata(report: &Report) -> Result<()> {
    for (k, v) in &report.metadata {
        if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::domain(format!("metadata `{k}` cannot be written on one line")));
        }
    }
    Ok(())
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::domain("cannot emit an empty report"));
    }
    check_metadata(report)?;
    let mut out = String::new();
    for (k, v) in &report.metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    let rows: Vec<Vec<String>> = report.rows.iter().map(ReportRow::cells).collect();
    match format {
        ReportFormat::Csv => {
            out.push_str(&REPORT_HEADER.join(","));
            out.push('\n');
            for cells in rows {
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let header: Vec<String> = REPORT_HEADER.iter().map(|s| s.to_string()).collect();
            out.push_str(&align(&header, &rows, &[header.len() - 1]));
        }
    }
    Ok(out)
}

/// Pad columns to a common width; columns listed in `left` are
/// left-aligned, the rest right-aligned.
fn align(header: &[String], rows: &[Vec<String>], left: &[usize]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if left.contains(&i) {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Parse a CSV report produced by [`emit_report`].
pub fn parse_report(text: &str, source_name: &str) -> Result<Report> {
    let mut metadata = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim_start();
        if let Some((k, v)) = body.split_once('=') {
            metadata.push((k.to_string(), v.to_string()));
        }
    }
    let table = CsvTable::parse(text, source_name, &REPORT_HEADER)?;
    let mut rows = Vec::new();
    for row in table.rows() {
        let flags = row.str("flags");
        rows.push(ReportRow {
            resolution: row.get("resolution")?,
            map50: row.get("map50")?,
            map5095: row.get("map5095")?,
            energy_per_frame_mj: row.get("energy_per_frame_mj")?,
            efficiency_pp_per_mj: row.get("efficiency_pp_per_mj")?,
            per_sample_mj: row.get("per_sample_mj")?,
            average_power_mw: row.get("average_power_mw")?,
            lifetime_days: row.get("lifetime_days")?,
            flags: if flags.is_empty() {
                Vec::new()
            } else {
                flags.split('|').map(str::to_string).collect()
            },
        });
    }
    Ok(Report { metadata, rows })
}

/// Per-component energy breakdown of a ledger, with shares of the total.
pub fn emit_ledger(ledger: &EnergyLedger, format: ReportFormat) -> Result<String> {
    let total = ledger.total_mj();
    let header: Vec<String> = ["component", "phase", "energy_mj", "share_pct"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows: Vec<Vec<String>> = ledger
        .entries()
        .map(|e| {
            let share = if total > 0.0 { 100.0 * e.energy_mj / total } else { 0.0 };
            vec![
                e.component.to_string(),
                e.phase,
                format!("{:.4}", e.energy_mj),
                format!("{share:.2}"),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        String::new(),
        format!("{total:.4}"),
        format!("{:.2}", 100.0),
    ]);
    let mut out = String::new();
    let _ = writeln!(out, "# duration_s={:.6}", ledger.duration_s());
    let _ = writeln!(out, "# average_power_mw={:.4}", ledger.average_power_mw()?);
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Text => out.push_str(&align(&header, &rows, &[0, 1])),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(resolution: u32, eff: f64, best: bool) -> LifetimeRow {
        LifetimeRow {
            resolution,
            map50: 35.1,
            map5095: 13.4,
            energy_per_frame_mj: 2.630769230769,
            efficiency_pp_per_mj: eff,
            per_sample_mj: 4.58034,
            average_power_mw: 2.29017,
            lifetime_days: 40.3912,
            best_efficiency: best,
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = Report::from_lifetime_rows(&[row(128, 9.44, false), row(192, 13.3421, true)], true)
            .with_metadata("source", "shipped table1.csv")
            .with_metadata("assumptions", "radio.throughput_bps;capture.duration_s");
        let csv = emit_report(&r, ReportFormat::Csv).unwrap();
        assert!(csv.contains("192,35.1,13.4,2.6308,13.342,4.5803,2.2902,40.39,best-efficiency|assumption\n"));
        let back = parse_report(&csv, "r.csv").unwrap();
        assert_eq!(back, r);
        assert_eq!(emit_report(&back, ReportFormat::Csv).unwrap(), csv);
        assert_eq!(back.best().unwrap().resolution, 192);
    }

    #[test]
    fn single_row_and_text() {
        let r = Report::from_lifetime_rows(&[row(64, 2.7, true)], false);
        let csv = emit_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let text = emit_report(&r, ReportFormat::Text).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        // columns line up: the mAP column ends at the same offset
        let end = lines[0].find("map50").unwrap() + "map50".len();
        assert_eq!(&lines[1][end - 4..end], "35.1");
        assert!(emit_report(&Report::default(), ReportFormat::Csv).is_err());
    }

    #[test]
    fn ledger_breakdown() {
        let mut l = EnergyLedger::new(60.0).unwrap();
        l.add(crate::energy::Component::SleepFloor, "sleep", 45.0).unwrap();
        l.add(crate::energy::Component::Camera, "capture", 15.0).unwrap();
        let csv = emit_ledger(&l, ReportFormat::Csv).unwrap();
        assert!(csv.contains("camera,capture,15.0000,25.00\n"));
        assert!(csv.contains("total,,60.0000,100.00\n"));
        assert!(csv.starts_with("# duration_s=60.000000\n# average_power_mw=1.0000\n"));
        let text = emit_ledger(&l, ReportFormat::Text).unwrap();
        assert!(text
            .lines()
            .all(|line| line.starts_with('#') || line.len() == text.lines().nth(2).unwrap().len()));
    }
}
