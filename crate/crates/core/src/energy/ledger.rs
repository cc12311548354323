use std::collections::BTreeMap;

use super::Component;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub component: Component,
    pub phase: String,
    pub energy_mj: f64,
}

/// Energy accumulated per `(component, phase)` over an interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    entries: BTreeMap<(Component, String), f64>,
    duration_s: f64,
}

impl EnergyLedger {
    pub fn new(duration_s: f64) -> Result<Self> {
        if !(duration_s >= 0.0) || !duration_s.is_finite() {
            return Err(Error::domain(format!(
                "ledger duration must be nonnegative, got {duration_s}"
            )));
        }
        Ok(Self {
            entries: BTreeMap::new(),
            duration_s,
        })
    }

    pub fn add(&mut self, component: Component, phase: &str, energy_mj: f64) -> Result<()> {
        if !(energy_mj >= 0.0) || !energy_mj.is_finite() {
            return Err(Error::domain(format!(
                "{component}/{phase}: energy must be nonnegative, got {energy_mj}"
            )));
        }
        *self.entries.entry((component, phase.to_string())).or_insert(0.0) += energy_mj;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = LedgerEntry> + '_ {
        self.entries.iter().map(|((component, phase), &energy_mj)| LedgerEntry {
            component: component.clone(),
            phase: phase.clone(),
            energy_mj,
        })
    }

    pub fn total_mj(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn component_total_mj(&self, component: &Component) -> f64 {
        self.entries
            .iter()
            .filter(|((c, _), _)| c == component)
            .map(|(_, e)| e)
            .sum()
    }

    /// Energy of every sensor component together.
    pub fn sensor_total_mj(&self) -> f64 {
        self.entries
            .iter()
            .filter(|((c, _), _)| matches!(c, Component::Sensor(_)))
            .map(|(_, e)| e)
            .sum()
    }

    pub fn average_power_mw(&self) -> Result<f64> {
        if self.duration_s <= 0.0 {
            return Err(Error::domain("average power of a zero-length interval"));
        }
        Ok(self.total_mj() / self.duration_s)
    }
}
