//! `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment. A key may be flagged as
//! a calibrated assumption with a companion line `<key>.assumption = true`.
//! `calibration` and `sensors` name CSV files relative to the scenario file;
//! without them the shipped tables are used.
//!
//! | key | value |
//! |-----|-------|
//! | `mode` | `edge-inference`, `raw-streaming` or `end-to-end` |
//! | `resolution` | calibration row driving the camera |
//! | `camera_interval_s`, `sensor_interval_s` | seconds, or `off` |
//! | `payload_bytes` | radio payload per camera event |
//! | `sleep_power_mw` | sleep floor |
//! | `radio.tx_power_mw`, `radio.throughput_bps`, `radio.overhead_bytes` | radio link |
//! | `capture.power_mw`, `capture.duration_s` | frame grab without inference |
//! | `streaming.payload_bytes` | raw frame size for streaming sweeps |
//! | `sensors.readout` | `aggregate` or `per-sensor` |
//! | `sensors.transmit` | also send results over the radio (`true`/`false`) |
//! | `sensors.payload_bytes` | radio payload per readout |
//! | `policy.trigger` | `fixed` or `occupancy-driven` |
//! | `policy.vacant_interval_s` | sensor interval while the room is empty |
//! | `battery.capacity_mah`, `battery.voltage_v` | battery |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{parse_calibration, parse_sensors, read_text, DEFAULT_CALIBRATION, DEFAULT_SENSORS};
use crate::energy::{Battery, ModelConfig};
use crate::error::{Error, Result};
use crate::sim::{
    CaptureProfile, Mode, RadioModel, SamplingPolicy, SensorReadout, SweepMode, SweepTemplate, Trigger, Workload,
};

/// The shipped end-to-end scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../../../../config/end_to_end.cfg");

/// The shipped long-term deployment scenario used for sweeps.
pub const SWEEP_SCENARIO: &str = include_str!("../../../../config/edge.cfg");

const ASSUMPTION_SUFFIX: &str = ".assumption";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workload: Workload,
    pub policy: SamplingPolicy,
    pub battery: Battery,
    pub calibration: Vec<ModelConfig>,
    /// Where the calibration table came from.
    pub calibration_source: String,
    pub streaming_payload_bytes: u64,
    /// Keys whose values are calibrated assumptions, in file order.
    pub assumptions: Vec<String>,
}

impl Scenario {
    /// Template for a resolution sweep sharing this scenario's radio,
    /// capture cost, sleep floor and camera interval.
    pub fn sweep_template(&self, mode: SweepMode) -> Result<SweepTemplate> {
        let period_s = self
            .workload
            .camera_interval_s
            .ok_or_else(|| Error::domain("a sweep needs a camera interval"))?;
        Ok(SweepTemplate {
            mode,
            radio: self.workload.radio.clone(),
            capture: self.workload.capture,
            sleep_power_mw: self.workload.sleep_power_mw,
            period_s,
            streaming_payload_bytes: self.streaming_payload_bytes,
        })
    }

    pub fn is_assumption(&self, key: &str) -> bool {
        self.assumptions.iter().any(|k| k == key)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = read_text(path)?;
    parse_scenario(&text, &path.display().to_string(), path.parent())
}

struct Entries<'a> {
    source_name: &'a str,
    map: BTreeMap<String, (usize, String)>,
    last_line: usize,
}

impl Entries<'_> {
    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            source_name: self.source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    fn take_raw(&mut self, key: &str) -> Result<(usize, String)> {
        self.map
            .remove(key)
            .ok_or_else(|| self.error(self.last_line, format!("missing required key `{key}`")))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<(usize, T)>
    where
        T::Err: std::fmt::Display,
    {
        let (line, raw) = self.take_raw(key)?;
        let v = raw
            .parse()
            .map_err(|e| self.error(line, format!("`{key}`: cannot parse `{raw}`: {e}")))?;
        Ok((line, v))
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<(usize, T)>>
    where
        T::Err: std::fmt::Display,
    {
        if self.map.contains_key(key) {
            self.take(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn interval(&mut self, key: &str) -> Result<(usize, Option<f64>)> {
        let (line, raw) = self.take_raw(key)?;
        if raw == "off" {
            return Ok((line, None));
        }
        match raw.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok((line, Some(v))),
            _ => Err(self.error(
                line,
                format!("`{key}` must be a positive number of seconds or `off`, got `{raw}`"),
            )),
        }
    }

    fn at<T>(&self, line: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Domain(m) => self.error(line, m),
            other => self.error(line, other.to_string()),
        })
    }
}

fn parse_bool(raw: &str) -> std::result::Result<bool, String> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{raw}`")),
    }
}

/// Parse a scenario. Relative table paths resolve against `base_dir`
/// (the working directory if `None`).
pub fn parse_scenario(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Scenario> {
    let mut entries = Entries {
        source_name,
        map: BTreeMap::new(),
        last_line: text.lines().count().max(1),
    };
    let mut assumptions: Vec<(usize, String)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(entries.error(line, format!("expected `key = value`, found `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(entries.error(line, "empty key or value"));
        }
        if let Some(flagged) = key.strip_suffix(ASSUMPTION_SUFFIX) {
            match parse_bool(value) {
                Ok(true) => assumptions.push((line, flagged.to_string())),
                Ok(false) => {}
                Err(e) => return Err(entries.error(line, format!("`{key}`: {e}"))),
            }
            continue;
        }
        if let Some((first, _)) = entries.map.get(key) {
            return Err(entries.error(line, format!("`{key}` already set on line {first}")));
        }
        entries.map.insert(key.to_string(), (line, value.to_string()));
    }
    for (line, key) in &assumptions {
        if !entries.map.contains_key(key) && !matches!(key.as_str(), "calibration" | "sensors") {
            return Err(entries.error(*line, format!("assumption flag for unknown key `{key}`")));
        }
    }

    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    };
    let (calibration, calibration_source) = match entries.map.remove("calibration") {
        Some((line, p)) => {
            let path = resolve(&p);
            let text = entries.at(line, read_text(&path))?;
            (
                parse_calibration(&text, &path.display().to_string())?,
                path.display().to_string(),
            )
        }
        None => (
            parse_calibration(DEFAULT_CALIBRATION, "shipped table1.csv")?,
            "shipped table1.csv".into(),
        ),
    };
    let sensors = match entries.map.remove("sensors") {
        Some((line, p)) => {
            let path = resolve(&p);
            let text = entries.at(line, read_text(&path))?;
            parse_sensors(&text, &path.display().to_string())?
        }
        None => parse_sensors(DEFAULT_SENSORS, "shipped sensors.csv")?,
    };

    let (mode_line, mode): (usize, String) = entries.take("mode")?;
    let mode: Mode = entries.at(mode_line, mode.parse())?;
    let (res_line, resolution): (usize, u32) = entries.take("resolution")?;
    let model_config = calibration.iter().find(|c| c.input_resolution == resolution).cloned();
    if model_config.is_none() {
        return Err(entries.error(
            res_line,
            format!("resolution {resolution} is not in {calibration_source}"),
        ));
    }
    let (_, camera_interval_s) = entries.interval("camera_interval_s")?;
    let (sensor_line, sensor_interval_s) = entries.interval("sensor_interval_s")?;
    let (_, payload_bytes_per_event): (_, u64) = entries.take("payload_bytes")?;
    let (_, sleep_power_mw): (_, f64) = entries.take("sleep_power_mw")?;

    let (radio_line, tx_power_mw): (_, f64) = entries.take("radio.tx_power_mw")?;
    let (_, throughput_bps): (_, f64) = entries.take("radio.throughput_bps")?;
    let (_, overhead): (_, u64) = entries.take("radio.overhead_bytes")?;
    let radio = entries.at(radio_line, RadioModel::new(tx_power_mw, throughput_bps, overhead))?;

    let (capture_line, capture_power): (_, f64) = entries.take("capture.power_mw")?;
    let (_, capture_duration): (_, f64) = entries.take("capture.duration_s")?;
    let capture = entries.at(capture_line, CaptureProfile::new(capture_power, capture_duration))?;
    let (_, streaming_payload_bytes): (_, u64) = entries.take("streaming.payload_bytes")?;

    let sensor_readout = match entries.optional::<String>("sensors.readout")? {
        None => SensorReadout::Aggregate,
        Some((_, v)) if v == "aggregate" => SensorReadout::Aggregate,
        Some((_, v)) if v == "per-sensor" => SensorReadout::PerSensor,
        Some((line, v)) => {
            return Err(entries.error(
                line,
                format!("`sensors.readout` must be `aggregate` or `per-sensor`, got `{v}`"),
            ))
        }
    };
    let transmit_in_cycle = match entries.optional::<String>("sensors.transmit")? {
        None => false,
        Some((line, v)) => parse_bool(&v).map_err(|e| entries.error(line, format!("`sensors.transmit`: {e}")))?,
    };
    let sensor_payload_bytes = entries.optional::<u64>("sensors.payload_bytes")?.map_or(0, |(_, v)| v);

    let trigger = match entries.optional::<String>("policy.trigger")? {
        None => Trigger::Fixed,
        Some((_, v)) if v == "fixed" => Trigger::Fixed,
        Some((_, v)) if v == "occupancy-driven" => Trigger::OccupancyDriven,
        Some((line, v)) => {
            return Err(entries.error(
                line,
                format!("`policy.trigger` must be `fixed` or `occupancy-driven`, got `{v}`"),
            ))
        }
    };
    let vacant = entries.optional::<f64>("policy.vacant_interval_s")?;
    let occupied = sensor_interval_s.unwrap_or(f64::MAX);
    let policy = match (trigger, vacant) {
        (Trigger::Fixed, _) => entries.at(sensor_line, SamplingPolicy::fixed(occupied))?,
        (Trigger::OccupancyDriven, Some((line, v))) => {
            entries.at(line, SamplingPolicy::occupancy_driven(occupied, v))?
        }
        (Trigger::OccupancyDriven, None) => {
            return Err(entries.error(
                entries.last_line,
                "occupancy-driven sampling needs `policy.vacant_interval_s`",
            ))
        }
    };

    let (battery_line, capacity): (_, f64) = entries.take("battery.capacity_mah")?;
    let (_, voltage): (_, f64) = entries.take("battery.voltage_v")?;
    let battery = entries.at(battery_line, Battery::new(capacity, voltage))?;

    if let Some((key, (line, _))) = entries.map.iter().next() {
        return Err(entries.error(*line, format!("unknown key `{key}`")));
    }

    let workload = Workload {
        mode,
        model_config,
        camera_interval_s,
        sensor_interval_s,
        payload_bytes_per_event,
        sleep_power_mw,
        radio,
        capture,
        sensors,
        sensor_readout,
        transmit_in_cycle,
        sensor_payload_bytes,
    };
    entries.at(mode_line, workload.validate())?;
    Ok(Scenario {
        workload,
        policy,
        battery,
        calibration,
        calibration_source,
        streaming_payload_bytes,
        assumptions: assumptions.into_iter().map(|(_, k)| k).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_parse() {
        let s = parse_scenario(DEFAULT_SCENARIO, "end_to_end.cfg", None).unwrap();
        assert_eq!(s.workload.mode, Mode::EndToEnd);
        assert_eq!(s.workload.model_config.as_ref().unwrap().input_resolution, 512);
        assert_eq!(s.workload.sensor_interval_s, Some(60.0));
        assert!(!s.workload.transmit_in_cycle);
        let e = parse_scenario(SWEEP_SCENARIO, "edge.cfg", None).unwrap();
        assert_eq!(e.workload.mode, Mode::EdgeInference);
        assert!(e.is_assumption("radio.throughput_bps"));
        assert!(e.is_assumption("capture.duration_s"));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_point_at_the_line() {
        let bad = DEFAULT_SCENARIO.replacen("sleep_power_mw = 1", "sleep_power_mw = one", 1);
        let expect = DEFAULT_SCENARIO
            .lines()
            .position(|l| l.starts_with("sleep_power_mw"))
            .unwrap()
            + 1;
        assert_eq!(line_of(parse_scenario(&bad, "s.cfg", None).unwrap_err()), expect);

        let extra = format!("{DEFAULT_SCENARIO}\nwarp_drive = on\n");
        let err = parse_scenario(&extra, "s.cfg", None).unwrap_err();
        assert!(err.to_string().contains("unknown key `warp_drive`"));
        assert_eq!(line_of(err), extra.lines().count());

        let dup = format!("{DEFAULT_SCENARIO}\nmode = edge-inference\n");
        assert!(parse_scenario(&dup, "s.cfg", None)
            .unwrap_err()
            .to_string()
            .contains("already set"));
        assert_eq!(line_of(parse_scenario("mode\n", "s.cfg", None).unwrap_err()), 1);
    }

    #[test]
    fn missing_table_file() {
        let text = format!("calibration = /nonexistent/table.csv\n{DEFAULT_SCENARIO}");
        assert_eq!(line_of(parse_scenario(&text, "s.cfg", None).unwrap_err()), 1);
    }

    #[test]
    fn unknown_resolution() {
        let bad = DEFAULT_SCENARIO.replacen("resolution = 512", "resolution = 500", 1);
        assert!(parse_scenario(&bad, "s.cfg", None)
            .unwrap_err()
            .to_string()
            .contains("500"));
    }
}
