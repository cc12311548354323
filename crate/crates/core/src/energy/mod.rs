//! Calibrated power and energy arithmetic.
//!
//! Everything in here works in milliwatts, seconds and millijoules, so that
//! `power × time` needs no unit conversion (1 mW · 1 s = 1 mJ). Power values
//! are measurements fed in as calibration data; nothing is derived from
//! operation counts.

mod ledger;
mod sensors;

use std::fmt;
use std::str::FromStr;

pub use ledger::{EnergyLedger, LedgerEntry};
pub use sensors::{SensorSpec, SensorSuite, HEATED_SENSORS};

use crate::error::{Error, Result};

/// Tolerance on `p_soc + p_mem + p_cam = p_total` (published figures carry
/// one decimal each).
pub const POWER_SUM_TOLERANCE_MW: f64 = 0.1;

/// Relative tolerance between `p_total / fps` and the published energy column.
pub const ENERGY_RATIO_TOLERANCE: f64 = 0.015;

/// A hardware block whose power draw is accounted separately.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    ComputeSoc,
    ExternalMemory,
    Camera,
    Radio,
    Sensor(String),
    SleepFloor,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::ComputeSoc => f.write_str("compute-soc"),
            Component::ExternalMemory => f.write_str("external-memory"),
            Component::Camera => f.write_str("camera"),
            Component::Radio => f.write_str("radio"),
            Component::Sensor(name) => write!(f, "sensor:{name}"),
            Component::SleepFloor => f.write_str("sleep-floor"),
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "compute-soc" => Component::ComputeSoc,
            "external-memory" => Component::ExternalMemory,
            "camera" => Component::Camera,
            "radio" => Component::Radio,
            "sleep-floor" => Component::SleepFloor,
            other => match other.strip_prefix("sensor:") {
                Some(name) if !name.is_empty() => Component::Sensor(name.to_string()),
                _ => return Err(Error::domain(format!("unknown component `{other}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerState {
    Active,
    Idle,
    Off,
}

/// Power drawn by one component in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    component: Component,
    state: PowerState,
    power_mw: f64,
}

impl PowerProfile {
    pub fn new(component: Component, state: PowerState, power_mw: f64) -> Result<Self> {
        if !(power_mw >= 0.0) || !power_mw.is_finite() {
            return Err(Error::domain(format!(
                "{component}: power must be a finite nonnegative value, got {power_mw}"
            )));
        }
        if state == PowerState::Off && power_mw != 0.0 {
            return Err(Error::domain(format!(
                "{component}: a component that is off draws no power, got {power_mw} mW"
            )));
        }
        if component == Component::SleepFloor && power_mw <= 0.0 {
            return Err(Error::domain("the sleep floor must be strictly positive"));
        }
        Ok(Self {
            component,
            state,
            power_mw,
        })
    }

    pub fn sleep_floor(power_mw: f64) -> Result<Self> {
        Self::new(Component::SleepFloor, PowerState::Idle, power_mw)
    }

    pub fn component(&self) -> &Component {
        &self.component
    }

    pub fn state(&self) -> PowerState {
        self.state
    }

    pub fn power_mw(&self) -> f64 {
        self.power_mw
    }
}

/// One row of the resolution sweep: accuracy, cost and measured power split
/// of a detector configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_resolution: u32,
    pub map50: f64,
    pub map5095: f64,
    pub ops_m: f64,
    pub params_k: f64,
    pub p_soc_mw: f64,
    pub p_mem_mw: f64,
    pub p_cam_mw: f64,
    pub p_total_mw: f64,
    pub fps: f64,
    /// Energy per frame as published; kept alongside the `p_total / fps`
    /// recomputation because the two differ by rounding.
    pub published_energy_mj: f64,
}

/// Which field of a [`ModelConfig`] broke an invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigViolation {
    pub column: &'static str,
    pub message: String,
}

impl ModelConfig {
    pub fn check(&self) -> std::result::Result<(), ConfigViolation> {
        let fail = |column, message: String| Err(ConfigViolation { column, message });
        if self.input_resolution == 0 {
            return fail("resolution", "resolution must be positive".into());
        }
        for (column, v) in [("map50", self.map50), ("map5095", self.map5095)] {
            if !(0.0..=100.0).contains(&v) {
                return fail(column, format!("{v} is not a percentage"));
            }
        }
        for (column, v) in [
            ("ops_m", self.ops_m),
            ("params_k", self.params_k),
            ("p_soc_mw", self.p_soc_mw),
            ("p_mem_mw", self.p_mem_mw),
            ("p_cam_mw", self.p_cam_mw),
            ("p_total_mw", self.p_total_mw),
            ("energy_mj", self.published_energy_mj),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(column, format!("{v} must be finite and nonnegative"));
            }
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return fail("fps", format!("frame rate must be positive, got {}", self.fps));
        }
        let parts = self.p_soc_mw + self.p_mem_mw + self.p_cam_mw;
        if (parts - self.p_total_mw).abs() > POWER_SUM_TOLERANCE_MW + 1e-9 {
            return fail(
                "p_total_mw",
                format!(
                    "total {} mW differs from component sum {parts:.3} mW by more than {POWER_SUM_TOLERANCE_MW} mW",
                    self.p_total_mw
                ),
            );
        }
        if self.published_energy_mj > 0.0 {
            let ratio = self.p_total_mw / self.fps;
            let rel = (ratio - self.published_energy_mj).abs() / self.published_energy_mj;
            if rel > ENERGY_RATIO_TOLERANCE {
                return fail(
                    "energy_mj",
                    format!(
                        "p_total/fps = {ratio:.4} mJ is {:.2}% away from {} mJ",
                        rel * 100.0,
                        self.published_energy_mj
                    ),
                );
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|v| {
            Error::domain(format!(
                "{}x{} config, `{}`: {}",
                self.input_resolution, self.input_resolution, v.column, v.message
            ))
        })
    }

    /// Duration of one capture + inference frame.
    pub fn frame_time_s(&self) -> f64 {
        1.0 / self.fps
    }

    /// Active profiles of the three measured blocks during a frame.
    pub fn active_profiles(&self) -> Result<[PowerProfile; 3]> {
        Ok([
            PowerProfile::new(Component::ComputeSoc, PowerState::Active, self.p_soc_mw)?,
            PowerProfile::new(Component::ExternalMemory, PowerState::Active, self.p_mem_mw)?,
            PowerProfile::new(Component::Camera, PowerState::Active, self.p_cam_mw)?,
        ])
    }
}

/// Ideal battery: no self-discharge, no voltage sag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    capacity_mah: f64,
    nominal_voltage_v: f64,
}

impl Battery {
    pub fn new(capacity_mah: f64, nominal_voltage_v: f64) -> Result<Self> {
        if !(capacity_mah > 0.0 && capacity_mah.is_finite()) {
            return Err(Error::domain(format!(
                "capacity must be positive, got {capacity_mah} mAh"
            )));
        }
        if !(nominal_voltage_v > 0.0 && nominal_voltage_v.is_finite()) {
            return Err(Error::domain(format!(
                "voltage must be positive, got {nominal_voltage_v} V"
            )));
        }
        Ok(Self {
            capacity_mah,
            nominal_voltage_v,
        })
    }

    pub fn capacity_mah(&self) -> f64 {
        self.capacity_mah
    }

    pub fn nominal_voltage_v(&self) -> f64 {
        self.nominal_voltage_v
    }
}

/// Energy in millijoules of a phase drawing `power_mw` for `duration_s`.
pub fn phase_energy(power_mw: f64, duration_s: f64) -> Result<f64> {
    if !(power_mw >= 0.0) || !(duration_s >= 0.0) {
        return Err(Error::domain(format!(
            "phase energy needs nonnegative inputs, got {power_mw} mW for {duration_s} s"
        )));
    }
    Ok(power_mw * duration_s)
}

/// `p_total / fps`, in millijoules.
pub fn energy_per_frame(config: &ModelConfig) -> Result<f64> {
    if !(config.fps > 0.0) {
        return Err(Error::domain(format!(
            "frame rate must be positive, got {}",
            config.fps
        )));
    }
    phase_energy(config.p_total_mw, 1.0 / config.fps)
}

/// Accuracy bought per unit of energy: mAP50 percentage points per mJ.
pub fn efficiency_pp_per_mj(config: &ModelConfig) -> Result<f64> {
    let energy = energy_per_frame(config)?;
    if energy <= 0.0 {
        return Err(Error::domain("efficiency is undefined for a zero-energy frame"));
    }
    Ok(config.map50 / energy)
}

pub fn battery_capacity_joules(battery: &Battery) -> Result<f64> {
    let b = Battery::new(battery.capacity_mah, battery.nominal_voltage_v)?;
    Ok(b.capacity_mah * 3.6 * b.nominal_voltage_v)
}

pub fn lifetime_hours(avg_power_mw: f64, battery: &Battery) -> Result<f64> {
    if !(avg_power_mw > 0.0) {
        return Err(Error::domain(format!(
            "lifetime needs a positive average power, got {avg_power_mw} mW"
        )));
    }
    Ok(battery_capacity_joules(battery)? / (avg_power_mw / 1000.0) / 3600.0)
}
