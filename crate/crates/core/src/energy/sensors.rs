use crate::error::{Error, Result};

/// Sensors with internal heating elements; these may peak up to 160 mW.
pub const HEATED_SENSORS: [&str; 3] = ["scd41", "bme680", "sgp41"];

const HEATED_PEAK_MW: f64 = 160.0;
const UNHEATED_PEAK_MW: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub name: String,
    pub readout_energy_mj: f64,
    pub readout_duration_s: f64,
    pub peak_power_mw: f64,
}

impl SensorSpec {
    pub fn is_heated(&self) -> bool {
        HEATED_SENSORS.contains(&self.name.as_str())
    }

    /// Mean draw over the readout window.
    pub fn readout_power_mw(&self) -> f64 {
        self.readout_energy_mj / self.readout_duration_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain(format!("sensor `{}`: {msg}", self.name)));
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return bad("name must be a nonempty token".into());
        }
        if !(self.readout_energy_mj >= 0.0) || !self.readout_energy_mj.is_finite() {
            return bad(format!("readout energy {} must be nonnegative", self.readout_energy_mj));
        }
        if !(self.readout_duration_s > 0.0) || !self.readout_duration_s.is_finite() {
            return bad(format!("readout duration {} must be positive", self.readout_duration_s));
        }
        let limit = if self.is_heated() {
            HEATED_PEAK_MW
        } else {
            UNHEATED_PEAK_MW
        };
        if !(self.peak_power_mw >= 0.0) || self.peak_power_mw > limit {
            return bad(format!("peak power {} mW exceeds {limit} mW", self.peak_power_mw));
        }
        if self.readout_power_mw() > self.peak_power_mw + 1e-9 {
            return bad(format!(
                "mean readout power {:.2} mW exceeds the declared peak {} mW",
                self.readout_power_mw(),
                self.peak_power_mw
            ));
        }
        Ok(())
    }
}

/// The environmental sensor array read out by the radio SoC.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSuite {
    sensors: Vec<SensorSpec>,
}

impl SensorSuite {
    pub fn new(sensors: Vec<SensorSpec>) -> Result<Self> {
        for (i, s) in sensors.iter().enumerate() {
            s.validate()?;
            if sensors[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::domain(format!("sensor `{}` listed twice", s.name)));
            }
        }
        Ok(Self { sensors })
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn total_energy_mj(&self) -> f64 {
        self.sensors.iter().map(|s| s.readout_energy_mj).sum()
    }

    /// Length of a full sequential readout.
    pub fn total_duration_s(&self) -> f64 {
        self.sensors.iter().map(|s| s.readout_duration_s).sum()
    }

    pub fn heated_energy_mj(&self) -> f64 {
        self.sensors
            .iter()
            .filter(|s| s.is_heated())
            .map(|s| s.readout_energy_mj)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, e: f64, t: f64, peak: f64) -> SensorSpec {
        SensorSpec {
            name: name.into(),
            readout_energy_mj: e,
            readout_duration_s: t,
            peak_power_mw: peak,
        }
    }

    #[test]
    fn peak_limits_depend_on_heating() {
        assert!(spec("scd41", 100.0, 1.0, 160.0).validate().is_ok());
        assert!(spec("scd41", 100.0, 1.0, 161.0).validate().is_err());
        assert!(spec("as7331", 1.0, 1.0, 31.0).validate().is_err());
        assert!(spec("as7331", 40.0, 1.0, 30.0).validate().is_err());
        assert!(spec("as7331", 1.0, 0.0, 30.0).validate().is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let s = spec("as7331", 1.0, 1.0, 10.0);
        assert!(SensorSuite::new(vec![s.clone(), s]).is_err());
    }
}
