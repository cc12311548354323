use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgenode::io::{parse_report, parse_trace};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn edgenode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgenode"))
        .args(args)
        .current_dir(root())
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Value of a `key  value` summary line.
fn summary(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).filter(|rest| rest.starts_with(' ')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn simulate_end_to_end_hour() {
    let out = edgenode(&["simulate", "--scenario", "config/end_to_end.cfg", "--duration", "3600"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let cycle = summary(&text, "cycle_energy_mj");
    let power = summary(&text, "average_power_mw");
    let hours = summary(&text, "lifetime_h");
    assert!((cycle - 929.0).abs() <= 0.03 * 929.0, "{cycle}");
    assert!((power - 15.5).abs() <= 0.03 * 15.5, "{power}");
    assert!((hours - 143.0).abs() <= 0.03 * 143.0, "{hours}");
    assert!(text.contains("# assumptions=radio.throughput_bps;capture.power_mw;capture.duration_s;sensors\n"));
}

#[test]
fn simulate_trace_integrates_to_the_reported_total() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = edgenode(&[
        "simulate",
        "--scenario",
        "config/end_to_end.cfg",
        "--duration",
        "600",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let events = parse_trace(&std::fs::read_to_string(&trace).unwrap(), "trace.csv").unwrap();
    let integral: f64 = events
        .iter()
        .map(|e| e.power_mw * (e.t_end_us - e.t_start_us) as f64 / 1e6)
        .sum();
    let total = summary(&stdout(&out), "total_energy_mj");
    assert!((integral - total).abs() <= 1e-3, "{integral} vs {total}");

    let report = edgenode(&["report", "--trace", trace.to_str().unwrap(), "--format", "csv"]);
    assert!(report.status.success(), "{}", stderr(&report));
    let text = stdout(&report);
    let row = text.lines().find(|l| l.starts_with("total,")).unwrap();
    let reported: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((reported - total).abs() <= 1e-3);
}

#[test]
fn occupancy_trace_lowers_the_adaptive_cost() {
    let base = ["simulate", "--scenario", "config/adaptive.cfg", "--duration", "86400"];
    let occupied = edgenode(&base);
    let mut args = base.to_vec();
    args.extend(["--occupancy", "fixtures/occupancy_half_day.csv"]);
    let half = edgenode(&args);
    assert!(occupied.status.success() && half.status.success(), "{}", stderr(&half));
    assert!(summary(&stdout(&half), "total_energy_mj") < summary(&stdout(&occupied), "total_energy_mj"));
}

#[test]
fn simulate_input_errors_exit_2() {
    let missing = edgenode(&["simulate", "--scenario", "config/nope.cfg", "--duration", "60"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("nope.cfg"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(root().join("config/end_to_end.cfg"))
        .unwrap()
        .replace("sleep_power_mw = 1", "sleep_power_mw = lots");
    std::fs::write(&cfg, &text).unwrap();
    let line = text.lines().position(|l| l.starts_with("sleep_power_mw")).unwrap() + 1;
    let bad = edgenode(&["simulate", "--scenario", cfg.to_str().unwrap(), "--duration", "60"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains(&format!("bad.cfg:{line}:")), "{}", stderr(&bad));
    assert!(stdout(&bad).is_empty());

    let usage = edgenode(&["simulate", "--scenario", "config/end_to_end.cfg"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn sweep_marks_192_and_prints_savings() {
    let out = edgenode(&["sweep", "--calibration", "calibration/table1.csv", "--mode", "edge"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = parse_report(&stdout(&out), "sweep").unwrap();
    assert_eq!(report.rows.len(), 8);
    assert_eq!(report.best().unwrap().resolution, 192);
    let savings = report.metadata("savings").unwrap();
    let pct: f64 = savings.split('%').next().unwrap().parse().unwrap();
    assert!((pct - 42.0).abs() <= 1.0, "{savings}");
    assert!(savings.contains("at 192x192"));
}

#[test]
fn sweep_single_row_is_best() {
    let dir = tempfile::tempdir().unwrap();
    let table = std::fs::read_to_string(root().join("calibration/table1.csv")).unwrap();
    let one: String = table
        .lines()
        .filter(|l| l.starts_with("resolution") || l.starts_with("320,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.path().join("one.csv");
    std::fs::write(&path, one).unwrap();
    let out = edgenode(&["sweep", "--calibration", path.to_str().unwrap(), "--mode", "streaming"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = parse_report(&stdout(&out), "sweep").unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.best().unwrap().resolution, 320);
}

#[test]
fn sweep_rejects_a_bad_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = std::fs::read_to_string(root().join("calibration/table1.csv")).unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, table.replacen("25.2", "-1", 1)).unwrap();
    let out = edgenode(&["sweep", "--calibration", path.to_str().unwrap(), "--mode", "edge"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fps"), "{}", stderr(&out));
}

fn dma_columns(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            format!("{},{},{}", c[0], c[6], c[7])
        })
        .collect()
}

#[test]
fn tile_shipped_model() {
    let three = edgenode(&[
        "tile",
        "--model",
        "models/micro192.edgs",
        "--l1",
        "131072",
        "--depth",
        "3",
    ]);
    let two = edgenode(&[
        "tile",
        "--model",
        "models/micro192.edgs",
        "--l1",
        "131072",
        "--depth",
        "2",
    ]);
    assert!(three.status.success() && two.status.success(), "{}", stderr(&three));
    let text = stdout(&three);
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let ws: u64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(ws <= 131_072, "{line}");
    }
    assert_eq!(dma_columns(&text), dma_columns(&stdout(&two)));
}

#[test]
fn tile_infeasible_exits_3_with_layer_name() {
    let out = edgenode(&["tile", "--model", "models/micro192.edgs", "--l1", "64", "--depth", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("layer `stem`"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());

    let depth = edgenode(&[
        "tile",
        "--model",
        "models/micro192.edgs",
        "--l1",
        "131072",
        "--depth",
        "4",
    ]);
    assert_eq!(depth.status.code(), Some(2));
}

#[test]
fn detect_fixtures() {
    let black = edgenode(&[
        "detect",
        "--image",
        "fixtures/black_320x240.pgm",
        "--model",
        "models/micro192.edgs",
    ]);
    assert!(black.status.success(), "{}", stderr(&black));
    assert!(stdout(&black).contains("# occupancy=0\n"));

    let planted = edgenode(&[
        "detect",
        "--image",
        "fixtures/planted_3heads.pgm",
        "--model",
        "fixtures/planted.edgs",
    ]);
    assert!(planted.status.success(), "{}", stderr(&planted));
    let text = stdout(&planted);
    assert!(text.contains("# occupancy=3\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("0,")).count(), 3);

    let again = edgenode(&[
        "detect",
        "--image",
        "fixtures/planted_3heads.pgm",
        "--model",
        "fixtures/planted.edgs",
    ]);
    assert_eq!(again.stdout, planted.stdout);

    let strict = edgenode(&[
        "detect",
        "--image",
        "fixtures/planted_3heads.pgm",
        "--model",
        "fixtures/planted.edgs",
        "--conf",
        "0.99999",
    ]);
    assert!(stdout(&strict).contains("# occupancy=0\n"));
}

#[test]
fn detect_malformed_image_exits_2() {
    let out = edgenode(&[
        "detect",
        "--image",
        "fixtures/truncated.pgm",
        "--model",
        "models/micro192.edgs",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("malformed image"));
}

#[test]
fn help_documents_flags_and_defaults() {
    for (cmd, flags) in [
        ("simulate", &["--scenario", "--duration", "--trace", "--occupancy"][..]),
        (
            "sweep",
            &["--calibration", "--mode", "--scenario", "--format", "[default: csv]"][..],
        ),
        ("tile", &["--model", "--l1", "--depth"][..]),
        (
            "detect",
            &[
                "--image",
                "--model",
                "--conf",
                "[default: 0.4]",
                "--iou",
                "[default: 0.5]",
            ][..],
        ),
        ("report", &["--trace", "--duration", "--format", "[default: text]"][..]),
    ] {
        let out = edgenode(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = stdout(&out);
        for f in flags {
            assert!(text.contains(f), "`{cmd} --help` lacks {f}:\n{text}");
        }
    }
}
