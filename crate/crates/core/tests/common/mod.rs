//! Independent oracles and random instance generators shared by the
//! property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use edgenode::energy::{Battery, Component, ModelConfig, SensorSpec, SensorSuite};
use edgenode::pipeline::kernels::Window;
use edgenode::pipeline::{DetectionBox, QuantParams, QuantizedTensor};
use edgenode::sim::{
    CaptureProfile, Mode, RadioModel, SamplingPolicy, SensorReadout, SimOutcome, Trigger, Workload, US_PER_S,
};
use edgenode::tiler::{LayerSpec, OpKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn table1() -> Vec<ModelConfig> {
    edgenode::io::parse_calibration(edgenode::io::DEFAULT_CALIBRATION, "table1.csv").unwrap()
}

pub fn row(resolution: u32) -> ModelConfig {
    table1().into_iter().find(|c| c.input_resolution == resolution).unwrap()
}

// ---------------------------------------------------------------- NMS

fn corner_iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.cx - a.w / 2.0, a.cy - a.h / 2.0, a.cx + a.w / 2.0, a.cy + a.h / 2.0);
    let (bx0, by0, bx1, by1) = (b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0);
    let inter = (ax1.min(bx1) - ax0.max(bx0)).max(0.0) * (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let union = a.w.max(0.0) * a.h.max(0.0) + b.w.max(0.0) * b.h.max(0.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Indices kept by greedy suppression, found by enumerating every subset:
/// the kept set is the unique `S` in which a box belongs to `S` exactly when
/// no higher-priority member of `S` overlaps it at or above the threshold.
pub fn nms_oracle(boxes: &[DetectionBox], threshold: f64) -> Vec<usize> {
    let n = boxes.len();
    // priority: higher confidence first, then lower index
    let before = |j: usize, i: usize| {
        boxes[j].confidence > boxes[i].confidence || (boxes[j].confidence == boxes[i].confidence && j < i)
    };
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        let member = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..n).all(|i| {
            let blocked =
                (0..n).any(|j| j != i && member(j) && before(j, i) && corner_iou(&boxes[j], &boxes[i]) >= threshold);
            member(i) == !blocked
        });
        if consistent {
            found.push(mask);
        }
    }
    assert_eq!(found.len(), 1, "greedy fixed point must be unique");
    let mut kept: Vec<usize> = (0..n).filter(|&i| found[0] & (1 << i) != 0).collect();
    kept.sort_by(|&a, &b| {
        if before(a, b) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    kept
}

/// Boxes on a coarse lattice so that exact IoU ties and duplicate
/// confidences actually occur.
pub fn random_boxes(rng: &mut ChaCha8Rng, max: usize) -> Vec<DetectionBox> {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            let x0 = rng.gen_range(0..8) as f64 / 10.0;
            let y0 = rng.gen_range(0..8) as f64 / 10.0;
            let w = rng.gen_range(0..=4) as f64 / 10.0;
            let h = rng.gen_range(1..=4) as f64 / 10.0;
            let conf = rng.gen_range(1..=5) as f64 / 5.0;
            DetectionBox::from_corners(x0, y0, x0 + w, y0 + h, conf)
        })
        .collect()
}

// ---------------------------------------------------------------- conv

pub struct ConvCase {
    pub input: QuantizedTensor,
    pub weights: QuantizedTensor,
    pub bias: Vec<i32>,
    pub out_scale: f64,
    pub window: Window,
    pub relu: bool,
}

pub fn random_conv(rng: &mut ChaCha8Rng) -> ConvCase {
    let c = rng.gen_range(1..=6);
    let o = rng.gen_range(1..=6);
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let h = rng.gen_range(k..=k + 6);
    let w = rng.gen_range(k..=k + 6);
    let window = Window {
        kernel: k,
        stride: rng.gen_range(1..=2),
        pad: rng.gen_range(0..=k / 2),
    };
    let in_scale = rng.gen_range(0.001..0.1);
    let input = QuantizedTensor::new(
        vec![c, h, w],
        (0..c * h * w).map(|_| rng.gen_range(-127..=127)).collect(),
        QuantParams::per_tensor(in_scale).unwrap(),
    )
    .unwrap();
    let w_scales: Vec<f64> = (0..o).map(|_| rng.gen_range(0.0005..0.05)).collect();
    let weights = QuantizedTensor::new(
        vec![o, c, k, k],
        (0..o * c * k * k).map(|_| rng.gen_range(-127..=127)).collect(),
        QuantParams::per_channel(w_scales.clone()).unwrap(),
    )
    .unwrap();
    let bias = (0..o).map(|_| rng.gen_range(-20_000..=20_000)).collect();
    // typical accumulator magnitude, spread so some outputs saturate
    let typical = in_scale * w_scales.iter().cloned().fold(0.0, f64::max) * 127.0 * 127.0 * ((c * k * k) as f64).sqrt();
    ConvCase {
        input,
        weights,
        bias,
        out_scale: typical / 127.0 * rng.gen_range(0.3..3.0),
        window,
        relu: rng.gen_bool(0.5),
    }
}

/// Real-valued convolution of the dequantized operands, rounded half to
/// even onto the output grid.
pub fn conv_oracle(case: &ConvCase) -> Vec<i32> {
    let (c, h, w) = match *case.input.shape() {
        [c, h, w] => (c, h, w),
        _ => unreachable!(),
    };
    let o = case.weights.shape()[0];
    let Window {
        kernel: k,
        stride: s,
        pad: p,
    } = case.window;
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (w + 2 * p - k) / s + 1;
    let s_in = case.input.qparams().scale();
    let x = case.input.data();
    let wt = case.weights.data();
    let mut out = Vec::with_capacity(o * oh * ow);
    for oc in 0..o {
        let s_w = case.weights.qparams().scales()[oc];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut real = case.bias[oc] as f64 * s_in * s_w;
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * s + ky) as isize - p as isize;
                            let ix = (ox * s + kx) as isize - p as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = x[(ic * h + iy as usize) * w + ix as usize] as f64 * s_in;
                            let wv = wt[((oc * c + ic) * k + ky) * k + kx] as f64 * s_w;
                            real += xv * wv;
                        }
                    }
                }
                let q = (real / case.out_scale).round_ties_even();
                let lo = if case.relu { 0.0 } else { -127.0 };
                out.push(q.clamp(lo, 127.0) as i32);
            }
        }
    }
    out
}

// ---------------------------------------------------------------- tiler

pub fn random_layer(rng: &mut ChaCha8Rng, name: &str) -> LayerSpec {
    let kind = [
        OpKind::Conv,
        OpKind::Conv,
        OpKind::Depthwise,
        OpKind::Pool,
        OpKind::Upsample,
    ][rng.gen_range(0..5)];
    let (k, stride, pad) = match kind {
        OpKind::Upsample => (1, rng.gen_range(2..=3), 0),
        OpKind::Pool => {
            let k = rng.gen_range(2..=3);
            (k, rng.gen_range(1..=k), 0)
        }
        _ => {
            let k = [1, 3, 5][rng.gen_range(0..3)];
            (k, rng.gen_range(1..=2), rng.gen_range(0..=k / 2))
        }
    };
    let in_c = rng.gen_range(1..=16);
    let out_c = if kind == OpKind::Conv {
        rng.gen_range(1..=24)
    } else {
        in_c
    };
    let (in_h, in_w) = if kind == OpKind::Upsample {
        (rng.gen_range(1..=12 / stride), rng.gen_range(1..=12 / stride))
    } else {
        (rng.gen_range(k.max(2)..=14), rng.gen_range(k.max(2)..=14))
    };
    LayerSpec {
        name: name.to_string(),
        kind,
        in_h,
        in_w,
        in_c,
        out_c,
        k_h: k,
        k_w: k,
        stride,
        pad_h: pad,
        pad_w: pad,
        bytes_per_element: [1, 1, 2][rng.gen_range(0..3)],
    }
}

/// Input rows (or columns) read by outputs `[a, b)`, counted one by one.
fn touched(l: &LayerSpec, horizontal: bool, a: usize, b: usize) -> usize {
    let (len, k, pad) = if horizontal {
        (l.in_w, l.k_w, l.pad_w)
    } else {
        (l.in_h, l.k_h, l.pad_h)
    };
    let mut hit = vec![false; len];
    for out in a..b {
        if l.kind == OpKind::Upsample {
            hit[out / l.stride] = true;
            continue;
        }
        for t in 0..k {
            let i = (out * l.stride + t) as isize - pad as isize;
            if i >= 0 && (i as usize) < len {
                hit[i as usize] = true;
            }
        }
    }
    let first = hit.iter().position(|&h| h);
    let last = hit.iter().rposition(|&h| h);
    match (first, last) {
        (Some(f), Some(l)) => l - f + 1,
        _ => 0,
    }
}

pub struct BruteForce {
    pub min_traffic: u64,
    pub candidates: usize,
}

/// Traffic and footprint of one tiling, by walking every tile.
pub fn tile_cost(l: &LayerSpec, th: usize, tw: usize, toc: usize) -> (u64, u64) {
    let bpe = l.bytes_per_element as u64;
    let (oh, ow) = (l.out_h(), l.out_w());
    let per_oc_weight = match l.kind {
        OpKind::Conv => (l.k_h * l.k_w * l.in_c) as u64,
        OpKind::Depthwise => (l.k_h * l.k_w) as u64,
        _ => 0,
    };
    let mut traffic = 0;
    let mut worst = 0;
    let mut oc0 = 0;
    while oc0 < l.out_c {
        let oc1 = (oc0 + toc).min(l.out_c);
        let weights = per_oc_weight * (oc1 - oc0) as u64 * bpe;
        traffic += weights;
        let channels = if l.kind == OpKind::Conv { l.in_c } else { oc1 - oc0 } as u64;
        let mut y0 = 0;
        while y0 < oh {
            let y1 = (y0 + th).min(oh);
            let mut x0 = 0;
            while x0 < ow {
                let x1 = (x0 + tw).min(ow);
                let input = (touched(l, false, y0, y1) * touched(l, true, x0, x1)) as u64 * channels * bpe;
                let output = ((y1 - y0) * (x1 - x0) * (oc1 - oc0)) as u64 * bpe;
                traffic += input + output;
                // output and weight buffers are sized for a full tile
                worst =
                    worst.max(input + (th.min(oh) * tw.min(ow) * toc) as u64 * bpe + per_oc_weight * toc as u64 * bpe);
                x0 = x1;
            }
            y0 = y1;
        }
        oc0 = oc1;
    }
    (traffic, worst)
}

pub fn brute_force(l: &LayerSpec, l1_bytes: u64) -> Option<BruteForce> {
    let mut best: Option<u64> = None;
    let mut candidates = 0;
    for th in 1..=l.out_h() {
        for tw in 1..=l.out_w() {
            for toc in 1..=l.out_c {
                candidates += 1;
                let (traffic, ws) = tile_cost(l, th, tw, toc);
                if 3 * ws <= l1_bytes {
                    best = Some(best.map_or(traffic, |b: u64| b.min(traffic)));
                }
            }
        }
    }
    best.map(|min_traffic| BruteForce {
        min_traffic,
        candidates,
    })
}

// ---------------------------------------------------------------- sim

pub fn battery() -> Battery {
    Battery::new(600.0, 3.7).unwrap()
}

pub fn radio() -> RadioModel {
    RadioModel::new(10.0, 1.36e6, 0).unwrap()
}

pub fn capture() -> CaptureProfile {
    CaptureProfile::new(40.0, 0.046).unwrap()
}

pub fn shipped_sensors() -> SensorSuite {
    edgenode::io::parse_sensors(edgenode::io::DEFAULT_SENSORS, "sensors.csv").unwrap()
}

pub fn small_suite(rng: &mut ChaCha8Rng) -> SensorSuite {
    let n = rng.gen_range(0..=3);
    SensorSuite::new(
        (0..n)
            .map(|i| {
                let d = rng.gen_range(1..=40) as f64 / 100.0;
                SensorSpec {
                    name: format!("s{i}"),
                    readout_energy_mj: d * rng.gen_range(0.0..30.0),
                    readout_duration_s: d,
                    peak_power_mw: 30.0,
                }
            })
            .collect(),
    )
    .unwrap()
}

/// A random workload that fits real time, with a matching policy and a
/// horizon in seconds.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> (Workload, SamplingPolicy, f64) {
    let configs = table1();
    let cfg = configs[rng.gen_range(0..configs.len())].clone();
    let mode = [Mode::EdgeInference, Mode::RawStreaming, Mode::EndToEnd][rng.gen_range(0..3)];
    let camera = rng.gen_bool(0.8).then(|| rng.gen_range(1..=40) as f64 / 4.0 + 0.5);
    let sensors = small_suite(rng);
    let sensor_interval = rng.gen_bool(0.7).then(|| rng.gen_range(2..=30) as f64);
    let payload = match mode {
        Mode::RawStreaming => rng.gen_range(0..=20_000),
        _ => 16,
    };
    let workload = Workload {
        mode,
        model_config: Some(cfg),
        camera_interval_s: camera,
        sensor_interval_s: sensor_interval,
        payload_bytes_per_event: payload,
        sleep_power_mw: rng.gen_range(0.1..2.0),
        radio: radio(),
        capture: capture(),
        sensors,
        sensor_readout: if rng.gen_bool(0.5) {
            SensorReadout::Aggregate
        } else {
            SensorReadout::PerSensor
        },
        transmit_in_cycle: rng.gen_bool(0.3),
        sensor_payload_bytes: rng.gen_range(0..64),
    };
    let occupied = sensor_interval.unwrap_or(60.0);
    let policy = if rng.gen_bool(0.5) {
        SamplingPolicy::fixed(occupied).unwrap()
    } else {
        SamplingPolicy::new(
            occupied,
            occupied * rng.gen_range(1..=5) as f64,
            Trigger::OccupancyDriven,
        )
        .unwrap()
    };
    let duration = rng.gen_range(1..=600) as f64 + rng.gen_range(0..1000) as f64 / 1000.0;
    (workload, policy, duration)
}

/// Conservation and scheduling invariants of one simulation run. Panics on
/// a structural violation; returns the relative gap between the summed
/// events and the ledger total.
pub fn check_trace(out: &SimOutcome, duration_s: f64) -> f64 {
    let horizon = (duration_s * US_PER_S).round() as u64;
    let events = &out.trace.events;
    let sum: f64 = events.iter().map(|e| e.energy_mj()).sum();
    let total = out.trace.summary.total_mj();
    let gap = (sum - total).abs() / total.max(1e-9);
    assert!(gap <= 1e-6, "{sum} vs {total}");
    assert!((out.average_power_mw * duration_s - total).abs() <= 1e-6 * total);

    let mut per_component: BTreeMap<String, Vec<(u64, u64)>> = BTreeMap::new();
    for e in events {
        assert!(e.t_start_us < e.t_end_us && e.t_end_us <= horizon, "{e:?}");
        per_component
            .entry(e.component.to_string())
            .or_default()
            .push((e.t_start_us, e.t_end_us));
    }
    for (c, spans) in &mut per_component {
        spans.sort();
        assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0), "{c} overlaps itself");
    }

    let mut active: Vec<(u64, u64)> = events
        .iter()
        .filter(|e| e.component != Component::SleepFloor)
        .map(|e| (e.t_start_us, e.t_end_us))
        .collect();
    active.sort();
    let mut union: Vec<(u64, u64)> = Vec::new();
    for (a, b) in active {
        match union.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => union.push((a, b)),
        }
    }
    let mut gaps = Vec::new();
    let mut t = 0;
    for &(a, b) in &union {
        if a > t {
            gaps.push((t, a));
        }
        t = b;
    }
    if t < horizon {
        gaps.push((t, horizon));
    }
    let sleep = per_component
        .get(&Component::SleepFloor.to_string())
        .cloned()
        .unwrap_or_default();
    assert_eq!(sleep, gaps, "sleep floor must fill exactly the idle gaps");
    let busy: u64 = union.iter().map(|(a, b)| b - a).sum();
    assert_eq!(busy + out.trace.busy_us(&Component::SleepFloor), horizon);
    gap
}
