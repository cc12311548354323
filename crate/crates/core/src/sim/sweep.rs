use super::{lifetime_days, per_sample_energy_edge, per_sample_energy_streaming, CaptureProfile, RadioModel};
use crate::energy::{efficiency_pp_per_mj, energy_per_frame, Battery, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Edge,
    Streaming,
}

/// Everything a sweep row needs besides the model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTemplate {
    pub mode: SweepMode,
    pub radio: RadioModel,
    pub capture: CaptureProfile,
    pub sleep_power_mw: f64,
    pub period_s: f64,
    pub streaming_payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeRow {
    pub resolution: u32,
    pub map50: f64,
    pub map5095: f64,
    pub energy_per_frame_mj: f64,
    pub efficiency_pp_per_mj: f64,
    pub per_sample_mj: f64,
    pub average_power_mw: f64,
    pub lifetime_days: f64,
    pub best_efficiency: bool,
}

/// One row per configuration; the highest-efficiency row is flagged (first
/// one on ties).
pub fn lifetime_table(
    configs: &[ModelConfig],
    template: &SweepTemplate,
    battery: &Battery,
) -> Result<Vec<LifetimeRow>> {
    if configs.is_empty() {
        return Err(Error::domain("a sweep needs at least one configuration"));
    }
    let mut rows = configs
        .iter()
        .map(|c| {
            let per_sample_mj = match template.mode {
                SweepMode::Edge => {
                    per_sample_energy_edge(c, Some(&template.radio), template.sleep_power_mw, template.period_s)?
                }
                SweepMode::Streaming => per_sample_energy_streaming(
                    &template.radio,
                    &template.capture,
                    template.sleep_power_mw,
                    template.period_s,
                    template.streaming_payload_bytes,
                )?,
            };
            let average_power_mw = per_sample_mj / template.period_s;
            Ok(LifetimeRow {
                resolution: c.input_resolution,
                map50: c.map50,
                map5095: c.map5095,
                energy_per_frame_mj: energy_per_frame(c)?,
                efficiency_pp_per_mj: efficiency_pp_per_mj(c)?,
                per_sample_mj,
                average_power_mw,
                lifetime_days: lifetime_days(average_power_mw, battery)?,
                best_efficiency: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows.iter().enumerate().fold(0, |b, (i, r)| {
        if r.efficiency_pp_per_mj > rows[b].efficiency_pp_per_mj {
            i
        } else {
            b
        }
    });
    rows[best].best_efficiency = true;
    Ok(rows)
}
