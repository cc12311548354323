//! Duty-cycle simulation: closed-form per-sample energies and a
//! discrete-event simulator over an integer-microsecond clock.

mod engine;
mod sweep;

use crate::energy::{energy_per_frame, phase_energy, Battery, ModelConfig, SensorSuite};
use crate::error::{Error, Result};

pub use engine::{simulate, SimOutcome, SimTrace, TraceEvent};
pub use sweep::{lifetime_table, LifetimeRow, SweepMode, SweepTemplate};

/// Air payload of one occupancy result: count, timestamp, status.
pub const OCCUPANCY_PAYLOAD_BYTES: u64 = 16;

/// Raw 320×240 8-bit grayscale frame.
pub const RAW_FRAME_BYTES: u64 = 320 * 240;

pub const US_PER_S: f64 = 1e6;

/// Application-layer radio link, modeled as throughput plus transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioModel {
    pub tx_power_mw: f64,
    pub throughput_bps: f64,
    pub per_event_overhead_bytes: u64,
}

impl RadioModel {
    pub fn new(tx_power_mw: f64, throughput_bps: f64, per_event_overhead_bytes: u64) -> Result<Self> {
        if !(tx_power_mw > 0.0 && tx_power_mw.is_finite()) {
            return Err(Error::domain(format!(
                "radio power must be positive, got {tx_power_mw} mW"
            )));
        }
        if !(throughput_bps > 0.0 && throughput_bps.is_finite()) {
            return Err(Error::domain(format!(
                "radio throughput must be positive, got {throughput_bps}"
            )));
        }
        Ok(Self {
            tx_power_mw,
            throughput_bps,
            per_event_overhead_bytes,
        })
    }

    pub fn tx_time_s(&self, payload_bytes: u64) -> f64 {
        (payload_bytes + self.per_event_overhead_bytes) as f64 * 8.0 / self.throughput_bps
    }

    pub fn tx_energy_mj(&self, payload_bytes: u64) -> f64 {
        self.tx_power_mw * self.tx_time_s(payload_bytes)
    }
}

/// Cost of grabbing one frame without processing it (streaming baseline).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureProfile {
    pub power_mw: f64,
    pub duration_s: f64,
}

impl CaptureProfile {
    pub fn new(power_mw: f64, duration_s: f64) -> Result<Self> {
        if !(power_mw >= 0.0) || !(duration_s >= 0.0) || !power_mw.is_finite() || !duration_s.is_finite() {
            return Err(Error::domain("capture power and duration must be nonnegative"));
        }
        Ok(Self { power_mw, duration_s })
    }

    pub fn energy_mj(&self) -> f64 {
        self.power_mw * self.duration_s
    }
}

fn check_sleep(sleep_power_mw: f64) -> Result<()> {
    if !(sleep_power_mw >= 0.0) || !sleep_power_mw.is_finite() {
        return Err(Error::domain(format!(
            "sleep power must be nonnegative, got {sleep_power_mw}"
        )));
    }
    Ok(())
}

/// Energy of one edge-inference sample: a frame, an optional occupancy
/// transmission, and sleep for the rest of the period.
pub fn per_sample_energy_edge(
    config: &ModelConfig,
    radio: Option<&RadioModel>,
    sleep_power_mw: f64,
    period_s: f64,
) -> Result<f64> {
    check_sleep(sleep_power_mw)?;
    let frame_s = config.frame_time_s();
    let tx_s = radio.map_or(0.0, |r| r.tx_time_s(OCCUPANCY_PAYLOAD_BYTES));
    if !(period_s >= frame_s) {
        return Err(Error::domain(format!(
            "period {period_s} s is shorter than the {frame_s:.4} s frame"
        )));
    }
    let residual = (period_s - frame_s - tx_s).max(0.0);
    Ok(energy_per_frame(config)?
        + radio.map_or(0.0, |r| r.tx_energy_mj(OCCUPANCY_PAYLOAD_BYTES))
        + phase_energy(sleep_power_mw, residual)?)
}

/// Energy of one raw-streaming sample: capture, transmit the payload, sleep.
pub fn per_sample_energy_streaming(
    radio: &RadioModel,
    capture: &CaptureProfile,
    sleep_power_mw: f64,
    period_s: f64,
    payload_bytes: u64,
) -> Result<f64> {
    check_sleep(sleep_power_mw)?;
    let tx_s = radio.tx_time_s(payload_bytes);
    let busy = capture.duration_s + tx_s;
    if !(busy <= period_s) {
        return Err(Error::domain(format!(
            "capture plus transmission take {busy:.4} s, longer than the {period_s} s period"
        )));
    }
    Ok(capture.energy_mj() + radio.tx_energy_mj(payload_bytes) + phase_energy(sleep_power_mw, period_s - busy)?)
}

/// Relative energy saved by `edge_mj` against `streaming_mj`, in percent.
pub fn savings_percent(edge_mj: f64, streaming_mj: f64) -> Result<f64> {
    if !(streaming_mj > 0.0) {
        return Err(Error::domain("savings need a positive baseline"));
    }
    Ok(100.0 * (streaming_mj - edge_mj) / streaming_mj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    EdgeInference,
    RawStreaming,
    EndToEnd,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::EdgeInference => "edge-inference",
            Mode::RawStreaming => "raw-streaming",
            Mode::EndToEnd => "end-to-end",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-inference" | "edge" => Ok(Mode::EdgeInference),
            "raw-streaming" | "streaming" => Ok(Mode::RawStreaming),
            "end-to-end" => Ok(Mode::EndToEnd),
            _ => Err(Error::domain(format!("unknown workload mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorReadout {
    /// One event carrying the whole suite's energy.
    Aggregate,
    /// Sensors read back to back, one event each.
    PerSensor,
}

/// What the node does and with which hardware figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub mode: Mode,
    pub model_config: Option<ModelConfig>,
    /// `None` disables the camera.
    pub camera_interval_s: Option<f64>,
    /// Sensor interval while occupied; `None` disables the sensors.
    pub sensor_interval_s: Option<f64>,
    /// Radio payload per camera event.
    pub payload_bytes_per_event: u64,
    pub sleep_power_mw: f64,
    pub radio: RadioModel,
    pub capture: CaptureProfile,
    pub sensors: SensorSuite,
    pub sensor_readout: SensorReadout,
    /// Send readings (and occupancy in end-to-end mode) over the radio.
    pub transmit_in_cycle: bool,
    pub sensor_payload_bytes: u64,
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("camera", self.camera_interval_s), ("sensor", self.sensor_interval_s)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!("{what} interval must be positive, got {v}")));
                }
            }
        }
        if self.sleep_power_mw <= 0.0 || !self.sleep_power_mw.is_finite() {
            return Err(Error::domain("the sleep floor must be strictly positive"));
        }
        if self.camera_interval_s.is_some() && self.mode != Mode::RawStreaming {
            match &self.model_config {
                Some(c) => c.validate()?,
                None => return Err(Error::domain("camera inference needs a model configuration")),
            }
        }
        Ok(())
    }

    /// Length of one full cycle: the sensor interval if sensors run, else
    /// the camera interval.
    pub fn cycle_s(&self) -> Option<f64> {
        self.sensor_interval_s.or(self.camera_interval_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Fixed,
    OccupancyDriven,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPolicy {
    pub occupied_sensor_interval_s: f64,
    pub vacant_sensor_interval_s: f64,
    pub trigger: Trigger,
}

impl SamplingPolicy {
    pub fn fixed(interval_s: f64) -> Result<Self> {
        Self::new(interval_s, interval_s, Trigger::Fixed)
    }

    pub fn occupancy_driven(occupied_s: f64, vacant_s: f64) -> Result<Self> {
        Self::new(occupied_s, vacant_s, Trigger::OccupancyDriven)
    }

    pub fn new(occupied_s: f64, vacant_s: f64, trigger: Trigger) -> Result<Self> {
        if !(occupied_s > 0.0) || !occupied_s.is_finite() || !vacant_s.is_finite() {
            return Err(Error::domain("sampling intervals must be positive"));
        }
        if vacant_s < occupied_s {
            return Err(Error::domain(format!(
                "vacant interval {vacant_s} s is shorter than occupied interval {occupied_s} s"
            )));
        }
        Ok(Self {
            occupied_sensor_interval_s: occupied_s,
            vacant_sensor_interval_s: vacant_s,
            trigger,
        })
    }

    pub fn interval_s(&self, occupants: u32) -> f64 {
        match (self.trigger, occupants) {
            (Trigger::OccupancyDriven, 0) => self.vacant_sensor_interval_s,
            _ => self.occupied_sensor_interval_s,
        }
    }
}

/// Ground-truth occupancy over time, used to drive the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrace {
    timeline: Vec<(f64, u32)>,
}

impl OccupancyTrace {
    pub fn new(timeline: Vec<(f64, u32)>) -> Result<Self> {
        if timeline.is_empty() {
            return Err(Error::domain("an occupancy trace needs at least one entry"));
        }
        if timeline.iter().any(|(t, _)| !t.is_finite()) {
            return Err(Error::domain("occupancy timestamps must be finite"));
        }
        if let Some(w) = timeline.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::domain(format!(
                "occupancy timestamps must increase strictly: {} then {}",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { timeline })
    }

    pub fn timeline(&self) -> &[(f64, u32)] {
        &self.timeline
    }

    /// Count in effect at `t_s`; before the first entry, the first count.
    pub fn count_at(&self, t_s: f64) -> u32 {
        let idx = self.timeline.partition_point(|(t, _)| *t <= t_s);
        self.timeline[idx.saturating_sub(1)].1
    }
}

/// Lifetime of `battery` at a constant average draw, in days.
pub fn lifetime_days(avg_power_mw: f64, battery: &Battery) -> Result<f64> {
    Ok(crate::energy::lifetime_hours(avg_power_mw, battery)? / 24.0)
}
