use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, CsvTable};
use crate::energy::Component;
use crate::error::Result;
use crate::sim::{OccupancyTrace, TraceEvent};

pub const OCCUPANCY_HEADER: [&str; 2] = ["t_s", "count"];

pub const TRACE_HEADER: [&str; 5] = ["t_start_us", "t_end_us", "component", "phase", "power_mw"];

pub fn load_occupancy(path: &Path) -> Result<OccupancyTrace> {
    parse_occupancy(&read_text(path)?, &path.display().to_string())
}

pub fn parse_occupancy(text: &str, source_name: &str) -> Result<OccupancyTrace> {
    let table = CsvTable::parse(text, source_name, &OCCUPANCY_HEADER)?;
    let mut timeline: Vec<(f64, u32)> = Vec::new();
    for row in table.rows() {
        let t: f64 = row.get("t_s")?;
        if !t.is_finite() {
            return Err(row.error("t_s", "timestamp must be finite"));
        }
        if let Some(&(prev, _)) = timeline.last() {
            if t <= prev {
                return Err(row.error("t_s", format!("{t} does not follow {prev}")));
            }
        }
        timeline.push((t, row.get("count")?));
    }
    if timeline.is_empty() {
        return Err(table.schema_error(2, "t_s", "no occupancy entries"));
    }
    OccupancyTrace::new(timeline)
}

/// Power values use the shortest representation that parses back to the
/// same `f64`, so the emitted trace integrates to the simulated total.
pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.t_start_us, e.t_end_us, e.component, e.phase, e.power_mw
        );
    }
    out
}

pub fn parse_trace(text: &str, source_name: &str) -> Result<Vec<TraceEvent>> {
    let table = CsvTable::parse(text, source_name, &TRACE_HEADER)?;
    let mut events = Vec::new();
    for row in table.rows() {
        let t_start_us: u64 = row.get("t_start_us")?;
        let t_end_us: u64 = row.get("t_end_us")?;
        if t_end_us < t_start_us {
            return Err(row.error("t_end_us", format!("{t_end_us} precedes the start {t_start_us}")));
        }
        let component: Component = row
            .str("component")
            .parse()
            .map_err(|e: crate::Error| row.error("component", e.to_string()))?;
        let power_mw: f64 = row.get("power_mw")?;
        if !(power_mw >= 0.0) || !power_mw.is_finite() {
            return Err(row.error("power_mw", format!("{power_mw} must be nonnegative")));
        }
        events.push(TraceEvent {
            t_start_us,
            t_end_us,
            component,
            phase: row.str("phase").to_string(),
            power_mw,
        });
    }
    Ok(events)
}
