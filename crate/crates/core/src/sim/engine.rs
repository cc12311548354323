use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::{Mode, OccupancyTrace, SamplingPolicy, SensorReadout, Workload, US_PER_S};
use crate::energy::{lifetime_hours, Battery, Component, EnergyLedger};
use crate::error::{Error, Result};

/// One constant-power interval on one component, `[t_start_us, t_end_us)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub t_start_us: u64,
    pub t_end_us: u64,
    pub component: Component,
    pub phase: String,
    pub power_mw: f64,
}

impl TraceEvent {
    pub fn duration_s(&self) -> f64 {
        (self.t_end_us - self.t_start_us) as f64 / US_PER_S
    }

    pub fn energy_mj(&self) -> f64 {
        self.power_mw * self.duration_s()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub events: Vec<TraceEvent>,
    pub summary: EnergyLedger,
}

impl SimTrace {
    /// Time `component` spends in recorded events.
    pub fn busy_us(&self, component: &Component) -> u64 {
        self.events
            .iter()
            .filter(|e| &e.component == component)
            .map(|e| e.t_end_us - e.t_start_us)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub duration_s: f64,
    pub average_power_mw: f64,
    /// Workload cycle length, if the workload has one.
    pub cycle_s: Option<f64>,
    /// Average energy of one cycle over the simulated horizon.
    pub cycle_energy_mj: Option<f64>,
    pub lifetime_hours: f64,
}

pub(crate) fn to_us(s: f64) -> u64 {
    (s * US_PER_S).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Source {
    Camera,
    Sensors,
}

/// Queued work, keyed by the time it becomes ready.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    /// A radio transmission that has to start before `deadline`.
    Transmit {
        payload: u64,
        deadline: u64,
        phase: &'static str,
    },
    Tick(Source),
}

struct Engine<'a> {
    workload: &'a Workload,
    horizon_us: u64,
    busy_until: BTreeMap<Component, u64>,
    events: Vec<TraceEvent>,
    /// `(ready time, work, cycle)`
    queue: BinaryHeap<Reverse<(u64, Pending, u64)>>,
}

impl Engine<'_> {
    /// Record a phase that has to start exactly at `start`.
    fn mandatory(
        &mut self,
        cycle: u64,
        start: u64,
        dur: u64,
        component: Component,
        phase: &str,
        power_mw: f64,
    ) -> Result<u64> {
        if let Some(&busy) = self.busy_until.get(&component) {
            if busy > start {
                return Err(Error::Scheduling {
                    cycle,
                    message: format!(
                        "{component} {phase} at {start} us overlaps the previous phase ending at {busy} us"
                    ),
                });
            }
        }
        self.record(start, dur, component, phase, power_mw);
        Ok(start + dur)
    }

    fn enqueue_transmit(&mut self, cycle: u64, ready: u64, payload: u64, deadline: u64, phase: &'static str) {
        self.queue.push(Reverse((
            ready,
            Pending::Transmit {
                payload,
                deadline,
                phase,
            },
            cycle,
        )));
    }

    /// Send behind any transmission in flight; transmissions go out in the
    /// order they become ready. Each has to start before `deadline`, its
    /// source's next tick.
    fn transmit(&mut self, cycle: u64, ready: u64, payload: u64, deadline: u64, phase: &str) -> Result<()> {
        let radio = &self.workload.radio;
        let dur = to_us(radio.tx_time_s(payload));
        let start = ready.max(self.busy_until.get(&Component::Radio).copied().unwrap_or(0));
        if start >= deadline {
            return Err(Error::Scheduling {
                cycle,
                message: format!("radio backlog: {phase} cannot start before the next cycle at {deadline} us"),
            });
        }
        self.record(start, dur, Component::Radio, phase, radio.tx_power_mw);
        Ok(())
    }

    fn record(&mut self, start: u64, dur: u64, component: Component, phase: &str, power_mw: f64) {
        self.busy_until.insert(component.clone(), start + dur);
        if dur == 0 || start >= self.horizon_us {
            return;
        }
        self.events.push(TraceEvent {
            t_start_us: start,
            t_end_us: (start + dur).min(self.horizon_us),
            component,
            phase: phase.to_string(),
            power_mw,
        });
    }

    fn camera(&mut self, cycle: u64, t: u64, next: u64) -> Result<()> {
        let w = self.workload;
        match w.mode {
            Mode::RawStreaming => {
                let cap = w.capture;
                let end = self.mandatory(
                    cycle,
                    t,
                    to_us(cap.duration_s),
                    Component::Camera,
                    "capture",
                    cap.power_mw,
                )?;
                self.enqueue_transmit(cycle, end, w.payload_bytes_per_event, next, "frame");
                Ok(())
            }
            Mode::EdgeInference | Mode::EndToEnd => {
                let cfg = w.model_config.as_ref().expect("validated");
                let dur = to_us(cfg.frame_time_s());
                self.mandatory(cycle, t, dur, Component::ComputeSoc, "inference", cfg.p_soc_mw)?;
                self.mandatory(cycle, t, dur, Component::ExternalMemory, "inference", cfg.p_mem_mw)?;
                let end = self.mandatory(cycle, t, dur, Component::Camera, "capture", cfg.p_cam_mw)?;
                if w.mode == Mode::EdgeInference || w.transmit_in_cycle {
                    self.enqueue_transmit(cycle, end, w.payload_bytes_per_event, next, "occupancy");
                }
                Ok(())
            }
        }
    }

    fn sensors(&mut self, cycle: u64, t: u64, next: u64) -> Result<()> {
        let w = self.workload;
        let suite = &w.sensors;
        if suite.sensors().is_empty() {
            return Ok(());
        }
        let end = match w.sensor_readout {
            SensorReadout::Aggregate => {
                let dur = to_us(suite.total_duration_s());
                let power = suite.total_energy_mj() / (dur as f64 / US_PER_S);
                self.mandatory(cycle, t, dur, Component::Sensor("suite".into()), "readout", power)?
            }
            SensorReadout::PerSensor => {
                let mut at = t;
                for s in suite.sensors() {
                    let dur = to_us(s.readout_duration_s);
                    let power = s.readout_energy_mj / (dur as f64 / US_PER_S);
                    at = self.mandatory(cycle, at, dur, Component::Sensor(s.name.clone()), "readout", power)?;
                }
                at
            }
        };
        if end > next {
            return Err(Error::Scheduling {
                cycle,
                message: format!("sensor readout ends at {end} us, after the next readout at {next} us"),
            });
        }
        if w.transmit_in_cycle {
            self.enqueue_transmit(cycle, end, w.sensor_payload_bytes, next, "readings");
        }
        Ok(())
    }

    /// Fill every instant where no component is active with the sleep floor.
    fn sleep_floor(&mut self) {
        let mut spans: Vec<(u64, u64)> = self.events.iter().map(|e| (e.t_start_us, e.t_end_us)).collect();
        spans.sort_unstable();
        let mut gaps = Vec::new();
        let mut covered = 0;
        for (s, e) in spans {
            if s > covered {
                gaps.push((covered, s));
            }
            covered = covered.max(e);
        }
        if covered < self.horizon_us {
            gaps.push((covered, self.horizon_us));
        }
        let power = self.workload.sleep_power_mw;
        for (s, e) in gaps {
            self.events.push(TraceEvent {
                t_start_us: s,
                t_end_us: e,
                component: Component::SleepFloor,
                phase: "sleep".into(),
                power_mw: power,
            });
        }
    }
}

/// Run `workload` for `duration_s` seconds. Without an occupancy trace the
/// room counts as occupied throughout.
pub fn simulate(
    workload: &Workload,
    policy: &SamplingPolicy,
    trace: Option<&OccupancyTrace>,
    duration_s: f64,
    battery: &Battery,
) -> Result<SimOutcome> {
    workload.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::domain(format!("duration must be positive, got {duration_s}")));
    }
    if let Some(s) = workload.sensor_interval_s {
        if s != policy.occupied_sensor_interval_s {
            return Err(Error::domain(format!(
                "sensor interval {s} s disagrees with the policy's occupied interval {} s",
                policy.occupied_sensor_interval_s
            )));
        }
    }
    let horizon_us = to_us(duration_s);
    let mut engine = Engine {
        workload,
        horizon_us,
        busy_until: BTreeMap::new(),
        events: Vec::new(),
        queue: BinaryHeap::new(),
    };

    if workload.camera_interval_s.is_some() {
        engine.queue.push(Reverse((0, Pending::Tick(Source::Camera), 0)));
    }
    if workload.sensor_interval_s.is_some() {
        engine.queue.push(Reverse((0, Pending::Tick(Source::Sensors), 0)));
    }
    while let Some(Reverse((t, pending, cycle))) = engine.queue.pop() {
        if t >= horizon_us {
            continue;
        }
        let source = match pending {
            Pending::Transmit {
                payload,
                deadline,
                phase,
            } => {
                engine.transmit(cycle, t, payload, deadline, phase)?;
                continue;
            }
            Pending::Tick(source) => source,
        };
        let next = match source {
            Source::Camera => t + to_us(workload.camera_interval_s.expect("scheduled")),
            Source::Sensors => {
                let occupants = trace.map_or(1, |tr| tr.count_at(t as f64 / US_PER_S));
                t + to_us(policy.interval_s(occupants))
            }
        };
        if next == t {
            return Err(Error::Scheduling {
                cycle,
                message: "interval rounds to zero microseconds".into(),
            });
        }
        match source {
            Source::Camera => engine.camera(cycle, t, next)?,
            Source::Sensors => engine.sensors(cycle, t, next)?,
        }
        engine.queue.push(Reverse((next, pending, cycle + 1)));
    }
    engine.sleep_floor();

    let mut events = engine.events;
    events.sort_by(|a, b| {
        (a.t_start_us, &a.component, a.t_end_us, &a.phase).cmp(&(b.t_start_us, &b.component, b.t_end_us, &b.phase))
    });
    let duration_s = horizon_us as f64 / US_PER_S;
    let mut summary = EnergyLedger::new(duration_s)?;
    for e in &events {
        summary.add(e.component.clone(), &e.phase, e.energy_mj())?;
    }
    let average_power_mw = summary.average_power_mw()?;
    let cycle_s = workload.cycle_s();
    Ok(SimOutcome {
        duration_s,
        average_power_mw,
        cycle_s,
        cycle_energy_mj: cycle_s.map(|c| average_power_mw * c),
        lifetime_hours: lifetime_hours(average_power_mw, battery)?,
        trace: SimTrace { events, summary },
    })
}
