use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, CsvTable};
use crate::energy::{ModelConfig, SensorSpec, SensorSuite};
use crate::error::Result;

pub const CALIBRATION_HEADER: [&str; 11] = [
    "resolution",
    "map50",
    "map5095",
    "ops_m",
    "params_k",
    "p_soc_mw",
    "p_mem_mw",
    "p_cam_mw",
    "p_total_mw",
    "fps",
    "energy_mj",
];

pub const SENSORS_HEADER: [&str; 4] = ["name", "readout_energy_mj", "readout_duration_s", "peak_power_mw"];

/// The shipped resolution sweep.
pub const DEFAULT_CALIBRATION: &str = include_str!("../../../../calibration/table1.csv");

/// The shipped sensor suite.
pub const DEFAULT_SENSORS: &str = include_str!("../../../../calibration/sensors.csv");

pub fn load_calibration(path: &Path) -> Result<Vec<ModelConfig>> {
    parse_calibration(&read_text(path)?, &path.display().to_string())
}

/// Parse a calibration table; every row is checked for internal
/// consistency, and at least one row is required.
pub fn parse_calibration(text: &str, source_name: &str) -> Result<Vec<ModelConfig>> {
    let table = CsvTable::parse(text, source_name, &CALIBRATION_HEADER)?;
    let mut configs = Vec::new();
    for row in table.rows() {
        let c = ModelConfig {
            input_resolution: row.get("resolution")?,
            map50: row.get("map50")?,
            map5095: row.get("map5095")?,
            ops_m: row.get("ops_m")?,
            params_k: row.get("params_k")?,
            p_soc_mw: row.get("p_soc_mw")?,
            p_mem_mw: row.get("p_mem_mw")?,
            p_cam_mw: row.get("p_cam_mw")?,
            p_total_mw: row.get("p_total_mw")?,
            fps: row.get("fps")?,
            published_energy_mj: row.get("energy_mj")?,
        };
        if let Err(v) = c.check() {
            return Err(row.error(v.column, v.message));
        }
        if configs
            .iter()
            .any(|o: &ModelConfig| o.input_resolution == c.input_resolution)
        {
            return Err(row.error("resolution", format!("resolution {} listed twice", c.input_resolution)));
        }
        configs.push(c);
    }
    if configs.is_empty() {
        return Err(table.schema_error(2, "resolution", "no configuration rows"));
    }
    Ok(configs)
}

pub fn write_calibration(configs: &[ModelConfig]) -> String {
    let mut out = CALIBRATION_HEADER.join(",");
    out.push('\n');
    for c in configs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.input_resolution,
            c.map50,
            c.map5095,
            c.ops_m,
            c.params_k,
            c.p_soc_mw,
            c.p_mem_mw,
            c.p_cam_mw,
            c.p_total_mw,
            c.fps,
            c.published_energy_mj
        );
    }
    out
}

pub fn load_sensors(path: &Path) -> Result<SensorSuite> {
    parse_sensors(&read_text(path)?, &path.display().to_string())
}

pub fn parse_sensors(text: &str, source_name: &str) -> Result<SensorSuite> {
    let table = CsvTable::parse(text, source_name, &SENSORS_HEADER)?;
    let mut sensors: Vec<SensorSpec> = Vec::new();
    for row in table.rows() {
        let s = SensorSpec {
            name: row.str("name").to_string(),
            readout_energy_mj: row.get("readout_energy_mj")?,
            readout_duration_s: row.get("readout_duration_s")?,
            peak_power_mw: row.get("peak_power_mw")?,
        };
        if let Err(e) = s.validate() {
            return Err(row.error("name", e.to_string()));
        }
        if sensors.iter().any(|o| o.name == s.name) {
            return Err(row.error("name", format!("sensor `{}` listed twice", s.name)));
        }
        sensors.push(s);
    }
    SensorSuite::new(sensors)
}
