//! Synthetic inputs with known answers, shipped under `fixtures/` and
//! `models/`.

use crate::error::Result;
use crate::io::{encode_pgm, write_model};
use crate::pipeline::kernels::Window;
use crate::pipeline::model::{quantize_graph, FloatLayer, LayerKind, MicroModel, Source};
use crate::pipeline::{debayer, downscale, CfaPattern, RawBayerImage, RgbImage};

/// Seed of the shipped detector's weights.
pub const REFERENCE_SEED: u64 = 0x0ED6_E5EE;

pub const REFERENCE_SIDE: usize = 192;

/// Side of the planted-scene mosaic and of the planted detector's input.
pub const PLANTED_SCENE_SIDE: usize = 256;
pub const PLANTED_MODEL_SIDE: usize = 64;

/// Grid cell (in detector input pixels) of the planted detector.
pub const PLANTED_CELL: usize = 8;

/// `(column, row)` grid cells holding a bright square in the planted scene.
pub const PLANTED_CELLS: [(usize, usize); 3] = [(1, 1), (5, 2), (3, 6)];

/// Objectness gain and offset: a fully lit cell scores `+10`, a dark one `-10`.
const OBJ_GAIN: f64 = 20.0;
const OBJ_OFFSET: f64 = -10.0;

pub fn reference_model() -> Result<MicroModel> {
    MicroModel::reference(REFERENCE_SIDE, REFERENCE_SEED)
}

pub fn black_frame(width: usize, height: usize) -> Result<RawBayerImage> {
    RawBayerImage::new(width, height, vec![0; width * height], CfaPattern::Rggb)
}

/// Black mosaic with a white square filling each planted cell.
pub fn planted_scene() -> Result<RawBayerImage> {
    let side = PLANTED_SCENE_SIDE;
    let block = side / (PLANTED_MODEL_SIDE / PLANTED_CELL);
    let mut px = vec![0u8; side * side];
    for &(cx, cy) in &PLANTED_CELLS {
        for y in cy * block..(cy + 1) * block {
            px[y * side + cx * block..y * side + (cx + 1) * block].fill(255);
        }
    }
    RawBayerImage::new(side, side, px, CfaPattern::Rggb)
}

/// Float layers of the planted detector: an 8×8 stride-8 mean over all
/// channels, then a head whose objectness is `20 · mean − 10` and whose box
/// logits are zero, so each lit cell decodes to exactly its own square.
pub fn planted_layers() -> Vec<FloatLayer> {
    let k = PLANTED_CELL;
    vec![
        FloatLayer {
            name: "cell_mean".into(),
            kind: LayerKind::Conv {
                window: Window {
                    kernel: k,
                    stride: k,
                    pad: 0,
                },
                relu: false,
            },
            inputs: vec![Source::Image],
            in_channels: 3,
            out_channels: 1,
            weights: vec![1.0 / (3 * k * k) as f64; 3 * k * k],
            bias: vec![0.0],
        },
        FloatLayer {
            name: "head".into(),
            kind: LayerKind::Head {
                anchors: vec![(k as f64, k as f64)],
            },
            inputs: vec![Source::Layer(0)],
            in_channels: 1,
            out_channels: 5,
            weights: vec![0.0, 0.0, 0.0, 0.0, OBJ_GAIN],
            bias: vec![0.0, 0.0, 0.0, 0.0, OBJ_OFFSET],
        },
    ]
}

/// Detector input of the planted scene, through the front end.
pub fn planted_input() -> Result<RgbImage> {
    downscale(
        &crate::pipeline::auto_white_balance(&debayer(&planted_scene()?)?)?,
        PLANTED_MODEL_SIDE,
    )
}

pub fn planted_detector() -> Result<MicroModel> {
    quantize_graph(PLANTED_MODEL_SIDE, planted_layers(), &[planted_input()?])
}

/// Occupancy timeline of a day with three occupants from 08:00 to 20:00.
pub const HALF_DAY_OCCUPANCY: &str = "# three occupants from 08:00 to 20:00\nt_s,count\n0,0\n28800,3\n72000,0\n";

/// Every shipped fixture as `(path relative to the workspace root, bytes)`.
pub fn shipped_files() -> Result<Vec<(&'static str, Vec<u8>)>> {
    let pgm = |raw: &RawBayerImage| encode_pgm(raw.width(), raw.height(), raw.mosaic(), Some(raw.pattern()));
    let black = black_frame(320, 240)?;
    // header claims 320x240 but the samples stop early
    let mut truncated = encode_pgm(320, 240, black.mosaic(), None);
    truncated.truncate(truncated.len() / 2);
    Ok(vec![
        ("models/micro192.edgs", write_model(&reference_model()?)?),
        ("fixtures/planted.edgs", write_model(&planted_detector()?)?),
        ("fixtures/black_320x240.pgm", pgm(&black)),
        ("fixtures/planted_3heads.pgm", pgm(&planted_scene()?)),
        ("fixtures/truncated.pgm", truncated),
        (
            "fixtures/occupancy_half_day.csv",
            HALF_DAY_OCCUPANCY.as_bytes().to_vec(),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::model::{image_to_float, run_float_graph};
    use crate::pipeline::{detect, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};

    #[test]
    fn float_oracle_lights_exactly_the_planted_cells() {
        let acts = run_float_graph(&planted_layers(), &image_to_float(&planted_input().unwrap()));
        let head = &acts[1];
        let grid = PLANTED_MODEL_SIDE / PLANTED_CELL;
        for y in 0..grid {
            for x in 0..grid {
                let obj = head.data[4 * grid * grid + y * grid + x];
                let lit = PLANTED_CELLS.contains(&(x, y));
                assert!(if lit { obj > 9.5 } else { obj < -9.5 }, "cell ({x},{y}): {obj}");
            }
        }
    }

    #[test]
    fn planted_scene_counts_three() {
        let d = detect(
            &planted_scene().unwrap(),
            &planted_detector().unwrap(),
            DEFAULT_CONF_THRESHOLD,
            DEFAULT_IOU_THRESHOLD,
        )
        .unwrap();
        assert_eq!(d.occupancy(), PLANTED_CELLS.len());
        let cell = PLANTED_CELL as f64 / PLANTED_MODEL_SIDE as f64;
        for b in &d.boxes {
            assert!((b.w - cell).abs() < 1e-9 && (b.h - cell).abs() < 1e-9);
            let (x, y) = (
                (b.cx / cell - 0.5).round() as usize,
                (b.cy / cell - 0.5).round() as usize,
            );
            assert!(PLANTED_CELLS.contains(&(x, y)));
        }
    }

    #[test]
    fn black_frame_counts_zero() {
        let d = detect(
            &black_frame(320, 240).unwrap(),
            &reference_model().unwrap(),
            DEFAULT_CONF_THRESHOLD,
            DEFAULT_IOU_THRESHOLD,
        )
        .unwrap();
        assert_eq!(d.occupancy(), 0, "{:?}", &d.boxes[..d.boxes.len().min(3)]);
    }
}
