//! `edgenode`: simulation runs, resolution sweeps, tiling plans and
//! detection on image fixtures.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 infeasible
//! tiling. Results go to standard output, diagnostics to standard error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use edgenode::energy::EnergyLedger;
use edgenode::io::{
    emit_ledger, emit_report, load_calibration, load_model, load_occupancy, load_pgm, load_scenario, parse_scenario,
    parse_trace, write_detections, write_plan, write_trace, DetectionRow, Report, ReportFormat, Scenario,
    SWEEP_SCENARIO,
};
use edgenode::pipeline::{detect, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use edgenode::sim::{lifetime_table, savings_percent, simulate, LifetimeRow, SweepMode};
use edgenode::tiler::{plan_graph, MemoryHierarchy};
use edgenode::Error;

#[derive(Parser)]
#[command(
    name = "edgenode",
    version,
    about = "Energy and occupancy toolkit for a battery-powered vision node"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario through the discrete-event simulator.
    Simulate {
        /// Scenario file (`key = value`).
        #[arg(long)]
        scenario: PathBuf,
        /// Simulated horizon in seconds.
        #[arg(long)]
        duration: f64,
        /// Write the per-event power trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Occupancy timeline (`t_s,count`) driving the sampling policy.
        /// Without it the room counts as occupied throughout.
        #[arg(long)]
        occupancy: Option<PathBuf>,
    },
    /// Per-resolution energy, efficiency and lifetime table.
    Sweep {
        /// Calibration table (resolution, fps, power split, mAP).
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, value_enum)]
        mode: CliSweepMode,
        /// Scenario supplying radio, capture, sleep floor, sampling period
        /// and battery [default: the shipped config/edge.cfg].
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: CliFormat,
    },
    /// Tile every compute layer of a model for an L1 scratchpad.
    Tile {
        /// Model container (`.edgs`).
        #[arg(long)]
        model: PathBuf,
        /// L1 capacity in bytes.
        #[arg(long)]
        l1: u64,
        /// Buffers per operand: 2 (double) or 3 (triple).
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=3))]
        depth: u32,
    },
    /// Count occupants in a raw Bayer frame.
    Detect {
        /// 8-bit binary PGM mosaic; a `# cfa=RGGB|BGGR|GRBG|GBRG` comment
        /// selects the pattern [default: RGGB].
        #[arg(long)]
        image: PathBuf,
        /// Model container (`.edgs`).
        #[arg(long)]
        model: PathBuf,
        /// Confidence threshold applied before suppression.
        #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
        conf: f64,
        /// IoU above which the weaker of two boxes is suppressed.
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Frame id written to the detections table.
        #[arg(long, default_value_t = 0)]
        frame_id: u64,
    },
    /// Per-component energy breakdown of a power trace written by
    /// `simulate --trace`.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Horizon in seconds [default: end of the last event].
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: CliFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliSweepMode {
    Edge,
    Streaming,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Text,
}

impl From<CliFormat> for ReportFormat {
    fn from(f: CliFormat) -> Self {
        match f {
            CliFormat::Csv => ReportFormat::Csv,
            CliFormat::Text => ReportFormat::Text,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            scenario,
            duration,
            trace,
            occupancy,
        } => cmd_simulate(&scenario, duration, trace.as_deref(), occupancy.as_deref()),
        Command::Sweep {
            calibration,
            mode,
            scenario,
            format,
        } => cmd_sweep(&calibration, mode, scenario.as_deref(), format.into()),
        Command::Tile { model, l1, depth } => cmd_tile(&model, l1, depth),
        Command::Detect {
            image,
            model,
            conf,
            iou,
            frame_id,
        } => cmd_detect(&image, &model, conf, iou, frame_id),
        Command::Report {
            trace,
            duration,
            format,
        } => cmd_report(&trace, duration, format.into()),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. }) => 3,
        _ => 2,
    }
}

fn cmd_simulate(path: &Path, duration_s: f64, trace_out: Option<&Path>, occupancy: Option<&Path>) -> Result<String> {
    let scenario = load_scenario(path)?;
    let occupancy = occupancy.map(load_occupancy).transpose()?;
    let outcome = simulate(
        &scenario.workload,
        &scenario.policy,
        occupancy.as_ref(),
        duration_s,
        &scenario.battery,
    )?;
    if let Some(p) = trace_out {
        std::fs::write(p, write_trace(&outcome.trace.events))
            .with_context(|| format!("cannot write trace to {}", p.display()))?;
    }

    let mut out = String::new();
    let _ = writeln!(out, "# scenario={}", path.display());
    let _ = writeln!(out, "# mode={}", scenario.workload.mode.as_str());
    if let Some(c) = &scenario.workload.model_config {
        let _ = writeln!(out, "# resolution={}", c.input_resolution);
    }
    let _ = writeln!(out, "# assumptions={}", scenario.assumptions.join(";"));
    let mut summary = vec![("duration_s", format!("{:.3}", outcome.duration_s))];
    if let (Some(c), Some(e)) = (outcome.cycle_s, outcome.cycle_energy_mj) {
        summary.push(("cycle_s", format!("{c:.3}")));
        summary.push(("cycle_energy_mj", format!("{e:.3}")));
    }
    summary.push(("total_energy_mj", format!("{:.3}", outcome.trace.summary.total_mj())));
    summary.push(("average_power_mw", format!("{:.4}", outcome.average_power_mw)));
    summary.push(("lifetime_h", format!("{:.2}", outcome.lifetime_hours)));
    summary.push(("lifetime_days", format!("{:.2}", outcome.lifetime_hours / 24.0)));
    let width = summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &summary {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out.push('\n');
    out.push_str(&emit_ledger(&outcome.trace.summary, ReportFormat::Text)?);
    Ok(out)
}

fn cmd_sweep(calibration: &Path, mode: CliSweepMode, scenario: Option<&Path>, format: ReportFormat) -> Result<String> {
    let configs = load_calibration(calibration)?;
    let (scenario, scenario_name) = match scenario {
        Some(p) => (load_scenario(p)?, p.display().to_string()),
        None => (
            parse_scenario(SWEEP_SCENARIO, "config/edge.cfg", None)?,
            "config/edge.cfg".to_string(),
        ),
    };
    let edge = lifetime_table(&configs, &scenario.sweep_template(SweepMode::Edge)?, &scenario.battery)?;
    let streaming = lifetime_table(
        &configs,
        &scenario.sweep_template(SweepMode::Streaming)?,
        &scenario.battery,
    )?;
    let (rows, mode_name, prefixes): (&[LifetimeRow], _, &[&str]) = match mode {
        CliSweepMode::Edge => (&edge, "edge", &["radio.", "payload_bytes", "sleep_power_mw"]),
        CliSweepMode::Streaming => (
            &streaming,
            "streaming",
            &["radio.", "capture.", "streaming.", "sleep_power_mw"],
        ),
    };
    let flagged = assumptions_matching(&scenario, prefixes);

    let best = edge
        .iter()
        .position(|r| r.best_efficiency)
        .expect("non-empty sweep has a best row");
    let (e, s) = (edge[best].per_sample_mj, streaming[best].per_sample_mj);
    let savings = format!(
        "{:.2}% at {res}x{res} (edge {e:.4} mJ vs streaming {s:.4} mJ per sample)",
        savings_percent(e, s)?,
        res = edge[best].resolution
    );

    let report = Report::from_lifetime_rows(rows, !flagged.is_empty())
        .with_metadata("calibration", calibration.display().to_string())
        .with_metadata("scenario", scenario_name)
        .with_metadata("mode", mode_name)
        .with_metadata(
            "period_s",
            format!("{}", scenario.sweep_template(SweepMode::Edge)?.period_s),
        )
        .with_metadata("assumptions", flagged.join(";"))
        .with_metadata("savings", savings);
    Ok(emit_report(&report, format)?)
}

fn assumptions_matching(scenario: &Scenario, prefixes: &[&str]) -> Vec<String> {
    scenario
        .assumptions
        .iter()
        .filter(|k| prefixes.iter().any(|p| k.starts_with(p)))
        .cloned()
        .collect()
}

fn cmd_tile(model_path: &Path, l1_bytes: u64, depth: u32) -> Result<String> {
    let model = load_model(model_path)?;
    let mem = MemoryHierarchy::with_l1(l1_bytes)?;
    let graph = plan_graph(&model, &mem, depth)?;
    let mut out = String::new();
    let _ = writeln!(out, "# model={}", model_path.display());
    let _ = writeln!(out, "# l1_bytes={l1_bytes}");
    let _ = writeln!(out, "# depth={depth}");
    let _ = writeln!(out, "# dma_total={}", graph.dma_total());
    out.push_str(&write_plan(&graph.plans));
    Ok(out)
}

fn cmd_detect(image: &Path, model_path: &Path, conf: f64, iou: f64, frame_id: u64) -> Result<String> {
    let raw = load_pgm(image)?.into_bayer()?;
    let model = load_model(model_path)?;
    let d = detect(&raw, &model, conf, iou)?;
    let rows: Vec<DetectionRow> = d
        .boxes
        .iter()
        .map(|b| DetectionRow {
            frame_id,
            detection: *b,
        })
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "# image={}", image.display());
    let _ = writeln!(out, "# occupancy={}", d.occupancy());
    out.push_str(&write_detections(&rows));
    Ok(out)
}

fn cmd_report(trace: &Path, duration_s: Option<f64>, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(trace).with_context(|| format!("cannot read {}", trace.display()))?;
    let events = parse_trace(&text, &trace.display().to_string())?;
    let end_us = events.iter().map(|e| e.t_end_us).max().unwrap_or(0);
    let duration_s = duration_s.unwrap_or(end_us as f64 / 1e6);
    let mut ledger = EnergyLedger::new(duration_s)?;
    for e in &events {
        ledger.add(e.component.clone(), &e.phase, e.energy_mj())?;
    }
    Ok(emit_ledger(&ledger, format)?)
}
